"""Channel pruning driven by MSEB importance scores."""

import json as _json

from . import _core
from ._core import (
    BundleError,
    Model,
    PipelineError,
    PlanError,
    RewriteError,
    TrainError,
    architectures,
    build,
    load,
    recommend_epochs,
    select_channels,
    threshold,
)


def _text(obj):
    return obj if isinstance(obj, str) else _json.dumps(obj)


def count(model, flops="mac"):
    return _json.loads(_core.count(model, flops))


def make_plan(scores, model, config=None):
    return _json.loads(_core.make_plan(_text(scores), model, _text(config) if config else ""))


def identity_plan(model):
    return _json.loads(_core.identity_plan(model))


def width_plan(model, widths):
    return _json.loads(_core.width_plan(model, list(widths)))


def apply(model, plan, mode="inherit-weights", strip_mseb=True, seed=None):
    return _core.apply(model, _text(plan), mode, strip_mseb, seed)


def report(before, after, base_epochs, flops="mac", rule="compute-equal"):
    return _json.loads(_core.report(before, after, base_epochs, flops, rule))


def default_pipeline_config():
    return _json.loads(_core.default_pipeline_config())


def run_pipeline(config=None):
    return _json.loads(_core.run_pipeline(_text(config or default_pipeline_config())))


__all__ = [
    "BundleError", "Model", "PipelineError", "PlanError", "RewriteError", "TrainError",
    "apply", "architectures", "build", "count", "default_pipeline_config", "identity_plan",
    "load", "make_plan", "recommend_epochs", "report", "run_pipeline", "select_channels",
    "threshold", "width_plan",
]
