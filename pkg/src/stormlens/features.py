"""Fixed catalog of the 12 magnetogram summary features the pipeline uses.

The order below is canonical: data files, attribution vectors, correlation
matrices, and plot rows all index features in this order.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError


@dataclass(frozen=True)
class Feature:
    name: str
    description: str
    units: str


FEATURES: tuple[Feature, ...] = (
    Feature("TOTUSJZ", "Total unsigned vertical current", "A"),
    Feature("USFLUX", "Total unsigned flux", "Mx"),
    Feature("TOTPOT", "Total magnetic free energy density", "erg cm^-1"),
    Feature("SAVNCPP", "Sum of the net current per polarity", "A"),
    Feature("ABSNJZH", "Absolute value of net current helicity", "G^2 m^-1"),
    Feature("MEANPOT", "Mean magnetic free energy", "erg cm^-3"),
    Feature("MEANSHR", "Mean shear angle", "deg"),
    Feature("SHRGT45", "Area fraction with shear angle above 45 degrees", "%"),
    Feature("MEANJZH", "Mean current helicity", "G^2 m^-1"),
    Feature("MEANGAM", "Mean angle of field from radial", "deg"),
    Feature("MEANALP", "Mean characteristic twist parameter", "Mm^-1"),
    Feature("MEANGBZ", "Mean gradient of vertical field", "G Mm^-1"),
)

FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in FEATURES)
N_FEATURES: int = len(FEATURES)

_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}


def feature_index(name: str) -> int:
    """Catalog position of a feature name; raises InputError if unknown."""
    try:
        return _INDEX[name]
    except KeyError:
        raise InputError(
            f"unknown feature {name!r}; expected one of {', '.join(FEATURE_NAMES)}"
        ) from None
