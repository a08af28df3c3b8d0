//! A whole local deployment in one value: a built site, the publisher's
//! origin serving it, and a CDN in front. Used by the examples, the
//! benchmarks and the end-to-end tests.

use std::sync::Arc;

use crate::build::{build_site, BuildConfig, BuildError, BuildReport};
use crate::cdn::{Cdn, CdnBehavior, CdnConfig, CdnError, CdnHandle};
use crate::clock::{Clock, SystemClock};
use crate::format::SigningKeyPair;
use crate::origin::{
    BootstrapDescriptor, CachePolicy, DescriptorError, DynamicRoute, Origin, OriginConfig,
    OriginError, OriginHandle, RouteKind,
};
use crate::verifier::VerifierConfig;

#[derive(Debug, thiserror::Error)]
pub enum DeployError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Origin(#[from] OriginError),
    #[error(transparent)]
    Cdn(#[from] CdnError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

#[derive(Debug, Clone)]
pub struct DeployOptions {
    pub clock: Arc<dyn Clock>,
    pub behaviors: Vec<CdnBehavior>,
    pub cache_policy: CachePolicy,
    /// Routes served by the origin; blob routes make it hold the key.
    pub dynamic_routes: Vec<DynamicRoute>,
}

impl Default for DeployOptions {
    fn default() -> Self {
        Self {
            clock: Arc::new(SystemClock),
            behaviors: Vec::new(),
            cache_policy: CachePolicy::default(),
            dynamic_routes: Vec::new(),
        }
    }
}

pub struct Deployment {
    pub origin: OriginHandle,
    pub cdn: CdnHandle,
    pub descriptor: BootstrapDescriptor,
    pub build: BuildReport,
    /// The build config with the real origin and CDN URLs filled in.
    pub config: BuildConfig,
}

impl Deployment {
    /// Starts the servers on loopback ports, then builds `config` (its
    /// origin URLs are replaced by the real ones) into the origin's
    /// static directory. Unless a signed dynamic route needs it, the
    /// origin holds only the public key.
    pub async fn start(
        mut config: BuildConfig,
        key: &SigningKeyPair,
        build_time: u64,
        options: DeployOptions,
    ) -> Result<Self, DeployError> {
        std::fs::create_dir_all(&config.output_dir).map_err(BuildError::from)?;
        let placeholder = BootstrapDescriptor::new(
            key.public_key().clone(),
            "http://placeholder.invalid/manifest.json",
            "http://placeholder.invalid",
        )?;
        let mut origin_config = OriginConfig::static_only(&config.output_dir, placeholder);
        origin_config.cache_policy = options.cache_policy;
        if options
            .dynamic_routes
            .iter()
            .any(|r| r.kind == RouteKind::Blob)
        {
            origin_config.key = Some(key.clone());
        }
        origin_config.dynamic_routes = options.dynamic_routes;
        let origin = Origin::new(origin_config)
            .with_clock(options.clock.clone())
            .serve()
            .await?;
        let mut cdn_config = CdnConfig::honest(origin.url());
        cdn_config.behaviors = options.behaviors;
        let cdn = Cdn::new(cdn_config)
            .with_clock(options.clock)
            .serve()
            .await?;

        config.cdn_origin = cdn.url();
        config.publisher_origin = origin.url();
        let build = build_site(&config, key, build_time)?;
        let descriptor =
            BootstrapDescriptor::new(key.public_key().clone(), config.manifest_url(), cdn.url())?;
        origin.set_bootstrap(descriptor.clone());
        Ok(Self {
            origin,
            cdn,
            descriptor,
            build,
            config,
        })
    }

    /// Re-signs the site with `key` and publishes the new descriptor, as a
    /// publisher rotating keys would. The CDN keeps whatever it cached.
    pub fn rebuild(&mut self, key: &SigningKeyPair, build_time: u64) -> Result<(), DeployError> {
        self.build = build_site(&self.config, key, build_time)?;
        self.descriptor = BootstrapDescriptor::new(
            key.public_key().clone(),
            self.config.manifest_url(),
            self.cdn.url(),
        )?;
        self.origin.set_bootstrap(self.descriptor.clone());
        Ok(())
    }

    /// Verifier settings pointing at this deployment's publisher.
    pub fn verifier_config(&self) -> VerifierConfig {
        VerifierConfig::new(self.origin.url())
    }

    pub async fn shutdown(self) {
        self.cdn.shutdown().await;
        self.origin.shutdown().await;
    }
}
