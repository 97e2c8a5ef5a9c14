"""Link prediction autoencoders and node-injection backdoor attacks."""

from ._core import (
    Graph,
    Model,
    Split,
    auc,
    export_viz,
    load_dataset,
    load_trigger,
    make_synthetic,
    read_reports,
    render_config,
    run,
    save_dataset,
    split_edges,
    train,
)

__all__ = [
    "Graph",
    "Model",
    "Split",
    "auc",
    "export_viz",
    "load_dataset",
    "load_trigger",
    "make_synthetic",
    "read_reports",
    "render_config",
    "run",
    "save_dataset",
    "split_edges",
    "train",
]
__version__ = "0.1.0"
