from .marketplace import Marketplace, ModelDescriptor, NoModel, default_marketplace, ranked_models, select_model
from .pipeline import (MonitoringReport, PipelineConfig, PipelineExhausted, SandboxReport,
                       evaluate_in_sandbox, run_pipeline)
from .sweep import stability_sweep
from .underlay import EstimationError, ScenarioSpec, UnderlayHandle, extract_features, load_underlay, prepare_sandbox
