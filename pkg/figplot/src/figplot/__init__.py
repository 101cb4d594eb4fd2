"""Static panel renderer for batchreuse engine CSVs."""

from .render import PanelSpec, RowSpec, SchemaError, build_figure, read_series, render

__all__ = [
    "PanelSpec",
    "RowSpec",
    "SchemaError",
    "build_figure",
    "read_series",
    "render",
]
