#[tokio::main]
async fn main() {
    std::process::exit(stickler::cli::run(std::env::args_os()).await);
}
