import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import fixturegen
from metricforge import Kind


@dataclass(frozen=True)
class Fixture:
    model: str
    vocab: str
    kind: Kind


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("fixtures")


@pytest.fixture(scope="session")
def vocab_path(fixture_dir):
    return str(fixturegen.write_vocab(fixture_dir / "vocab.txt"))


def _tiny(fixture_dir, vocab_path, kind):
    name = kind.value.replace("-", "_")
    model = fixturegen.write_tiny_model(str(fixture_dir / f"{name}.mfrg"), kind)
    return Fixture(model=model, vocab=vocab_path, kind=kind)


@pytest.fixture(scope="session")
def tiny_qe(fixture_dir, vocab_path):
    return _tiny(fixture_dir, vocab_path, Kind.COMET_QE)


@pytest.fixture(scope="session")
def tiny_comet(fixture_dir, vocab_path):
    return _tiny(fixture_dir, vocab_path, Kind.COMET)


@pytest.fixture(scope="session")
def tiny_bleurt(fixture_dir, vocab_path):
    return _tiny(fixture_dir, vocab_path, Kind.BLEURT)
