//! Pin a resource the publisher does not control by its SHA-256 digest.
//! Pinning is idempotent; a changed resource needs explicit confirmation.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::get;
use axum::Router;
use stickler::build::{pin_third_party, PinOptions};
use stickler::format::{Handler, Manifest, VerifyMode};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let body = Arc::new(Mutex::new("window.lib = 'v1';".to_string()));
    let app = Router::new()
        .route(
            "/lib.js",
            get(|State(b): State<Arc<Mutex<String>>>| async move { b.lock().unwrap().clone() }),
        )
        .with_state(body.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let url = format!("http://{}/lib.js", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, app).await });

    let manifest = pin_third_party(
        &Manifest::default(),
        &url,
        Handler::Script,
        PinOptions::default(),
    )
    .await?;
    let entry = &manifest.entries[0];
    println!(
        "pinned {} as sha256 {}",
        entry.url,
        digest(&entry.verify_mode)
    );

    let again = pin_third_party(&manifest, &url, Handler::Script, PinOptions::default()).await?;
    println!("pinning again leaves {} entry", again.entries.len());

    *body.lock().unwrap() = "window.lib = 'v2';".to_string();
    match pin_third_party(&manifest, &url, Handler::Script, PinOptions::default()).await {
        Err(e) => println!("after an upstream change: {e}"),
        Ok(_) => println!("unexpectedly re-pinned"),
    }
    let confirmed = PinOptions {
        confirm_change: true,
        ..PinOptions::default()
    };
    let updated = pin_third_party(&manifest, &url, Handler::Script, confirmed).await?;
    println!(
        "confirmed: sha256 {}",
        digest(&updated.entries[0].verify_mode)
    );
    Ok(())
}

fn digest(mode: &VerifyMode) -> String {
    match mode {
        VerifyMode::Hash(d) => d.to_string(),
        other => format!("{other:?}"),
    }
}
