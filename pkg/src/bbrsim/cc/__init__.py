"""Congestion controllers selectable by name."""

from .base import Controller
from .bbr import Bbr
from .bbr2 import Bbr2
from .classic import Cubic, Reno

BBR_V1_VARIANTS = ("bbr", "bbr_prime", "bbrplus", "bbr_hsr", "tsunami")
BBR_FAMILY = BBR_V1_VARIANTS + ("bbr2",)
ALGORITHMS = BBR_FAMILY + ("cubic", "reno")

DISPLAY_NAMES = {
    "bbr": "BBR",
    "bbr_prime": "BBR'",
    "bbrplus": "BBRPlus",
    "bbr_hsr": "BBR+",
    "tsunami": "Tsunami",
    "bbr2": "BBRv2",
    "cubic": "Cubic",
    "reno": "Reno",
}


class UnknownAlgorithm(ValueError):
    pass


def make_controller(name, rng=None, **opts):
    if name in BBR_V1_VARIANTS:
        return Bbr(name, rng=rng, **opts)
    if name == "bbr2":
        return Bbr2(rng=rng)
    if name == "cubic":
        return Cubic()
    if name == "reno":
        return Reno()
    raise UnknownAlgorithm(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")


__all__ = ["ALGORITHMS", "BBR_FAMILY", "BBR_V1_VARIANTS", "DISPLAY_NAMES", "Bbr", "Bbr2",
           "Controller", "Cubic", "Reno", "UnknownAlgorithm", "make_controller"]
