use std::sync::Mutex;

use crate::format::Handler;

/// Verified content on its way to a handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub url: String,
    pub handler: Handler,
    pub content_type: String,
    pub content: Vec<u8>,
    /// Set for [`Handler::ImageDataUri`].
    pub data_uri: Option<String>,
}

/// Where handlers end in the native client. Only ever called for content
/// whose verdict is `Verified`.
pub trait ContentSink: Send + Sync {
    fn deliver(&self, delivery: Delivery);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl ContentSink for NullSink {
    fn deliver(&self, _: Delivery) {}
}

/// Keeps every delivery, for assertions.
#[derive(Debug, Default)]
pub struct RecordingSink {
    deliveries: Mutex<Vec<Delivery>>,
}

impl RecordingSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deliveries(&self) -> Vec<Delivery> {
        self.deliveries.lock().expect("sink lock").clone()
    }

    pub fn delivered_urls(&self) -> Vec<String> {
        self.deliveries().into_iter().map(|d| d.url).collect()
    }

    /// Total bytes received for URLs ending in `suffix`.
    pub fn bytes_for(&self, suffix: &str) -> usize {
        self.deliveries
            .lock()
            .expect("sink lock")
            .iter()
            .filter(|d| d.url.ends_with(suffix))
            .map(|d| d.content.len())
            .sum()
    }

    pub fn clear(&self) {
        self.deliveries.lock().expect("sink lock").clear();
    }
}

impl ContentSink for RecordingSink {
    fn deliver(&self, delivery: Delivery) {
        self.deliveries.lock().expect("sink lock").push(delivery);
    }
}

impl<T: ContentSink + ?Sized> ContentSink for std::sync::Arc<T> {
    fn deliver(&self, delivery: Delivery) {
        (**self).deliver(delivery)
    }
}
