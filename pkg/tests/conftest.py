"""Shared fixtures for the test suite."""

import pytest


@pytest.fixture
def tmp_text_file(tmp_path):
    def write(name, content):
        path = tmp_path / name
        path.write_text(content, encoding="utf-8")
        return path

    return write
