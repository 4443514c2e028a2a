import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


CATALOG_HEADER = "image_id,lesion_id,diagnosis,age_years,localization,origin,sex"


def catalog_csv(rows):
    """Build catalog CSV text from (id, lesion, dx, age, loc, origin, sex) tuples."""
    lines = [CATALOG_HEADER]
    for row in rows:
        lines.append(",".join("" if v is None else str(v) for v in row))
    return "\n".join(lines) + "\n"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_catalog():
    from dermshift.metadata import parse_catalog

    text = catalog_csv(
        [
            ("img001", "les01", "melanoma", 45, "anterior torso", "HAM", "male"),
            ("img002", "les01", "melanoma", 45, "anterior torso", "HAM", "male"),
            ("img003", None, "nevus", 25, "head/neck", "HAM", "female"),
            ("img004", "les02", "nevus", 60, "head/neck", "HAM", None),
            ("img005", None, "basal cell carcinoma", 70, "anterior torso", "HAM", None),
            ("img006", None, "melanoma", None, "anterior torso", "BCN", "female"),
            ("img007", None, "nevus", 33, "palms/soles", "BCN", None),
            ("img008", None, "melanoma", 52, "zzz-unmapped-site", "BCN", None),
            ("img009", None, "nevus", 41, "oral/genital", "MSK", "female"),
            ("img010", None, "melanoma", 29, "anterior torso", "MSK", None),
        ]
    )
    return parse_catalog(text, "unit")
