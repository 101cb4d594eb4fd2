"""Panel layouts for the shipped experiment presets.

Each entry lists the stacked rows of the image: which direction each
row plots and how its axis is labelled.  The CSVs themselves come from
the directory handed to the renderer, so any rerun of the matching
batchreuse preset can be pointed at directly.
"""

from .render import RowSpec

_SINGLE = (RowSpec("e1", "overlap"),)
_EASY_HARD = (
    RowSpec("C1", "overlap"),
    RowSpec("C1_perp", "orthogonal overlap"),
)
_FOUR_AXES = tuple(RowSpec(f"e{i}", f"overlap e{i}") for i in range(1, 5))

PRESETS: dict[str, tuple[RowSpec, ...]] = {
    "fig1_left": _SINGLE,
    "fig1_center": _SINGLE,
    "fig1_right": _SINGLE,
    "fig2_left": _EASY_HARD,
    "fig2_center": _EASY_HARD,
    "fig2_right": (
        RowSpec("C1", "overlap"),
        RowSpec("custom:-1,1", "antisymmetric overlap"),
    ),
    "fig3": _FOUR_AXES,
    "fig4_sequential": _FOUR_AXES,
    "fig4_replacement": _FOUR_AXES,
    "fig5_minibatch1": _FOUR_AXES,
    "staircase": tuple(RowSpec(f"e{i}", f"overlap e{i}") for i in range(1, 4)),
}
