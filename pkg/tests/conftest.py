"""Shared instance cache so expensive constructions happen once per session."""

from kahlerlab.catalog import make_triple
from kahlerlab.profiles import Profile

_cache = {}


def get_triple(spec, profile=None, key=None):
    k = key if key is not None else spec
    if k not in _cache:
        _cache[k] = make_triple(spec, profile)
    return _cache[k]


def get_sine_cp3():
    """cp:n=3,l=1 carrying the sin(pi tau) profile via modification."""
    if "sine-cp3" not in _cache:
        target = Profile.from_expr("sin(pi*tau)", 0.0, 1.0)
        _cache["sine-cp3"] = make_triple("cp:n=3,l=1", target)
    return _cache["sine-cp3"]
