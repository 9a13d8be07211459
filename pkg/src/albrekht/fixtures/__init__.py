"""Bundled problem files."""
from __future__ import annotations

from importlib import resources

NAMES = (
    "lqgb",
    "lqgb_cross",
    "lqgb_divergent",
    "lqgb_isotropic",
    "lqr_sanity",
    "pendulum",
    "pendulum_printed",
    "zero_cost",
)


def fixture_path(name: str):
    if name not in NAMES:
        raise KeyError(f"no fixture named {name!r}; available: {', '.join(NAMES)}")
    return resources.files(__name__).joinpath(f"{name}.json")


def load_fixture(name: str):
    from ..problem_file import parse_problem
    import json

    return parse_problem(json.loads(fixture_path(name).read_text()))
