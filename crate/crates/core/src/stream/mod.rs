//! On-line phase: window boxplots are allocated to a bounded set of
//! micro-clusters as the streams advance.

mod distance;
mod store;

pub use distance::{fbp_distance, l2_distance, trapezoid_unit};
pub use store::{
    compute_threshold, read_event_log, write_event_log, AllocationOutcome, FbpMicroCluster,
    MicroClusterStore, StoreConfig, StoreEvent, EVENT_LOG_HEADER,
};

use crate::depth::DepthKind;
use crate::domain::{StreamBatch, TimeGrid};
use crate::error::{Error, Result};
use crate::fboxplot::{build_fbp, FenceConfig, FunctionalBoxplot};
use crate::smoothing::{SmoothingConfig, Smoother};

/// Settings of the per-window pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub window_size: usize,
    pub smoothing: SmoothingConfig,
    pub depth: DepthKind,
    pub fence: FenceConfig,
    pub store: StoreConfig,
}

impl OnlineConfig {
    pub fn for_window(window_size: usize) -> Self {
        Self {
            window_size,
            smoothing: SmoothingConfig::for_window(window_size),
            depth: DepthKind::default(),
            fence: FenceConfig::default(),
            store: StoreConfig::default(),
        }
    }
}

/// Smooths, summarizes and allocates one window at a time.
#[derive(Debug, Clone)]
pub struct OnlinePhase {
    smoother: Smoother,
    depth: DepthKind,
    fence: FenceConfig,
    store: MicroClusterStore,
    n_streams: Option<usize>,
    windows_processed: u64,
}

impl OnlinePhase {
    pub fn new(cfg: OnlineConfig) -> Result<Self> {
        let grid = TimeGrid::new(cfg.window_size)?;
        cfg.fence.validate()?;
        Ok(Self {
            smoother: Smoother::new(grid, cfg.smoothing)?,
            depth: cfg.depth,
            fence: cfg.fence,
            store: MicroClusterStore::new(grid, cfg.store)?,
            n_streams: None,
            windows_processed: 0,
        })
    }

    pub fn store(&self) -> &MicroClusterStore {
        &self.store
    }

    pub fn windows_processed(&self) -> u64 {
        self.windows_processed
    }

    /// Boxplot of one batch without touching the store.
    pub fn summarize_window(&self, batch: &StreamBatch) -> Result<FunctionalBoxplot> {
        if batch.window().size != self.smoother.grid().len() {
            return Err(Error::Data(format!(
                "batch window has {} samples, expected {}",
                batch.window().size,
                self.smoother.grid().len()
            )));
        }
        let curves = self.smoother.fit_batch(batch)?;
        build_fbp(&curves, batch.window(), self.depth, self.fence)
    }

    pub fn process_window(&mut self, batch: &StreamBatch) -> Result<AllocationOutcome> {
        match self.n_streams {
            Some(n) if n != batch.n_streams() => {
                return Err(Error::Data(format!(
                    "window {} has {} streams, earlier windows had {n}",
                    batch.window().index,
                    batch.n_streams()
                )))
            }
            _ => self.n_streams = Some(batch.n_streams()),
        }
        let fbp = self.summarize_window(batch)?;
        let outcome = self.store.allocate(fbp, batch.window().index)?;
        self.windows_processed += 1;
        Ok(outcome)
    }
}
