use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;

use plantsam_core::PipelineConfig;
use plantsam_service::backends::SharedDetector;
use plantsam_service::{Backends, Service, ServiceConfig};

use super::segment::BackendFlags;
use super::{RegionFlags, Report, TilingFlags};
use crate::Common;

#[derive(Debug, Clone, Args)]
#[command(
    after_help = "Data directory: `images/{id}.png|jpg` inputs, `masks/{id}.png` ground truth for the oracle detector. Jobs, sessions and accepted masks (`exports/`) are stored beside them.\nEndpoints: POST/GET /jobs, GET /jobs/{id}, GET /jobs/{id}/mask, POST/GET /sessions, GET /sessions/{id}, POST /sessions/{id}/points|undo|redo|accept|discard|tag, GET /sessions/{id}/mask, GET/PUT /images/{id}, GET /health."
)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080", env = "PLANTSAM_LISTEN")]
    pub listen: SocketAddr,
    /// Holds `images/`, `masks/`, job results and session state.
    #[arg(long, env = "PLANTSAM_DATA_DIR")]
    pub data_dir: PathBuf,
    /// Undo steps kept per session.
    #[arg(long, default_value_t = 32, env = "PLANTSAM_UNDO_DEPTH")]
    pub undo_depth: usize,
    #[command(flatten)]
    pub tiling: TilingFlags,
    #[command(flatten)]
    pub region: RegionFlags,
    #[command(flatten)]
    pub backends: BackendFlags,
    #[command(flatten)]
    pub common: Common,
}

pub fn build_service(args: &ServeArgs) -> Result<Arc<Service>> {
    let pipeline = PipelineConfig {
        tiling: args.tiling.config()?,
        detector: args.region.config()?,
        ..PipelineConfig::default()
    };
    let mut backends = Backends::standard();
    backends.register_detector(
        "heuristic",
        Arc::new(SharedDetector(Arc::new(args.backends.heuristic(&pipeline.detector)))),
    );
    backends.register_segmenter("reference", Arc::new(args.backends.reference()));
    if args.backends.detector_config.is_some() {
        let model = args.backends.model_detector(None, pipeline.detector.confidence_threshold)?;
        backends.register_detector("model", Arc::new(SharedDetector(model)));
    }
    if args.backends.segmenter_config.is_some() {
        backends.register_segmenter("model", args.backends.model_segmenter(None)?);
    }
    let mut config = ServiceConfig::new(&args.data_dir);
    if let Some(n) = args.common.workers {
        config.workers = n.max(1);
    }
    config.undo_depth = args.undo_depth;
    config.pipeline = pipeline;
    Service::open(config, backends).with_context(|| format!("opening {}", args.data_dir.display()))
}

pub fn run(args: &ServeArgs) -> Result<Report> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let service = build_service(args)?;
        plantsam_service::serve(service, args.listen).await?;
        anyhow::Ok(())
    })?;
    let mut report = Report::new("serve");
    report.line("stopped");
    Ok(report)
}
