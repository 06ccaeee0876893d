"""Shared fixtures: a temp-rooted catalog with one registered platform."""

import pytest

from crossflow.catalog import Catalog, PlatformDescriptor


@pytest.fixture()
def workspace(tmp_path):
    """(catalog, storage_root) with platform "local" (2 cores, 1 gpu)."""
    root = tmp_path / "local"
    root.mkdir()
    catalog = Catalog(str(tmp_path / "catalog.ndjson"), default_platform="local")
    catalog.register_platform(
        PlatformDescriptor(
            "local", cpu_cores=2, gpus=1, relative_speed=1.0, storage_root=str(root)
        )
    )
    return catalog, root
