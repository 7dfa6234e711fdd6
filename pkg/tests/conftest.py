import pytest

from defner.corpus import load_dataset
from defner.kb import SemanticTypeAllowlist, load_kb

from pathlib import Path

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def cdr_dataset():
    return load_dataset(
        FIXTURES / "corpora" / "cdr_like.jsonl", FIXTURES / "corpora" / "cdr_like.schema.json"
    )


@pytest.fixture(scope="session")
def ncbi_dataset():
    return load_dataset(
        FIXTURES / "corpora" / "ncbi_like.jsonl", FIXTURES / "corpora" / "ncbi_like.schema.json"
    )


@pytest.fixture(scope="session")
def fixture_kb():
    return load_kb(FIXTURES / "kb" / "snapshot.tsv")


@pytest.fixture(scope="session")
def default_allowlist():
    return SemanticTypeAllowlist.default()
