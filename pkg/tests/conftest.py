import pytest

from maritime_intel.fixtures import write_fixture_csv
from maritime_intel.ingest import ingest_files
from maritime_intel.sampler import sample_contexts
from maritime_intel.store import RecordStore


@pytest.fixture(scope="session")
def fixture_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("fixture") / "ais_fixture.csv"
    rows = write_fixture_csv(path)
    assert rows >= 5000
    return path


@pytest.fixture(scope="session")
def populated_store(fixture_csv, tmp_path_factory):
    db = tmp_path_factory.mktemp("store") / "records.db"
    store = RecordStore(db)
    stats = ingest_files([str(fixture_csv)], store)
    assert stats.rejected == 0
    yield store
    store.close()


@pytest.fixture(scope="session")
def sampled_contexts(populated_store):
    contexts, _plan = sample_contexts(populated_store, 8, seed=7)
    return contexts


@pytest.fixture(scope="session")
def one_context(sampled_contexts):
    return sampled_contexts[0]
