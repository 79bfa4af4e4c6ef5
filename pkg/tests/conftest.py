import sys
from pathlib import Path

import pytest
from hypothesis import settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from parcelflow.core import DEFAULT_ZONES, ParcelInstance, validate_label  # noqa: E402

settings.register_profile("default", deadline=None)
settings.load_profile("default")

BASE_LABEL = {
    "id": "ABC123DEF456",
    "weight_g": 500,
    "dims_mm": (100, 100, 100),
    "zone": "DL",
    "nature": "NONMETALLIC",
    "fragility": "REGULAR",
    "address": "x",
}


def make_label(**overrides):
    return validate_label({**BASE_LABEL, **overrides})


@pytest.fixture
def label():
    return make_label()


@pytest.fixture
def clean_parcel(label):
    return ParcelInstance(label)


_ID_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
_address = st.text(
    alphabet=st.characters(blacklist_categories=("Cc", "Cs"), blacklist_characters="|"),
    max_size=60,
).filter(lambda s: len(s.encode("utf-8")) <= 120)

label_dicts = st.fixed_dictionaries({
    "id": st.text(alphabet=_ID_ALPHABET, min_size=12, max_size=12),
    "weight_g": st.integers(1, 50_000),
    "dims_mm": st.tuples(*[st.integers(10, 600)] * 3),
    "zone": st.sampled_from(DEFAULT_ZONES),
    "nature": st.sampled_from(["METALLIC", "NONMETALLIC"]),
    "fragility": st.sampled_from(["FRAGILE", "REGULAR"]),
    "address": _address,
})
labels = label_dicts.map(validate_label)
