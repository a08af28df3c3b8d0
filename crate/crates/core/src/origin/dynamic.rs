use std::collections::HashMap;
use std::sync::Arc;

/// What a dynamic route's generator sees.
#[derive(Debug, Clone)]
pub struct DynamicRequest {
    pub path: String,
    pub query: Option<String>,
    pub now: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub content_type: String,
    pub content: Vec<u8>,
}

impl Generated {
    pub fn new(content_type: impl Into<String>, content: impl Into<Vec<u8>>) -> Self {
        Self {
            content_type: content_type.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct GeneratorError(pub String);

/// Produces dynamic content. Called concurrently from many requests.
pub trait Generator: Send + Sync {
    fn generate(&self, request: &DynamicRequest) -> Result<Generated, GeneratorError>;
}

impl<F> Generator for F
where
    F: Fn(&DynamicRequest) -> Result<Generated, GeneratorError> + Send + Sync,
{
    fn generate(&self, request: &DynamicRequest) -> Result<Generated, GeneratorError> {
        self(request)
    }
}

/// `time`: the server clock as JSON. `echo`: the request path and query.
pub(super) fn builtin_generators() -> HashMap<String, Arc<dyn Generator>> {
    let mut map: HashMap<String, Arc<dyn Generator>> = HashMap::new();
    map.insert(
        "time".into(),
        Arc::new(|req: &DynamicRequest| {
            Ok(Generated::new(
                "application/json",
                format!("{{\"now\":{}}}", req.now),
            ))
        }),
    );
    map.insert(
        "echo".into(),
        Arc::new(|req: &DynamicRequest| {
            let mut body = req.path.clone();
            if let Some(q) = &req.query {
                body.push('?');
                body.push_str(q);
            }
            Ok(Generated::new("text/plain", body))
        }),
    );
    map
}
