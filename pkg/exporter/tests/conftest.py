import pytest

from datagen import build_dataset


@pytest.fixture()
def dataset(tmp_path):
    images, masks = build_dataset(tmp_path)
    return tmp_path, images, masks
