import fcntl
import json
import multiprocessing
import os

import pytest

import fixturegen
import stubserver
from metricforge import Kind, Registry, open_container
from metricforge.errors import (
    DownloadError,
    LockTimeoutError,
    OfflineError,
    UnknownMetricError,
)

METRIC = "cometoid22-wmt22"
REMOTE = "marian-nmt/cometoid22-wmt22"


@pytest.fixture(scope="module")
def stub(tmp_path_factory):
    root = tmp_path_factory.mktemp("served")
    stubserver.publish_metric(root, REMOTE, Kind.COMET_QE, seed=77)
    with stubserver.serve_directory(root) as server:
        yield server


def fresh_registry(tmp_path, server, **kwargs) -> Registry:
    return Registry(root=tmp_path / "cache", base_url=server.url, **kwargs)


def model_hits(server):
    return server.hits[f"{REMOTE}/model.mfrg"]


class TestResolveLocalPath:
    def test_file_path_passes_through(self, tiny_comet):
        resolved = Registry(root="/nonexistent", base_url="http://127.0.0.1:9").resolve(
            tiny_comet.model
        )
        assert resolved.model == tiny_comet.model
        assert resolved.vocab is None
        assert resolved.kind is Kind.COMET

    def test_unknown_name_rejected(self, tmp_path):
        registry = Registry(root=tmp_path, base_url="http://127.0.0.1:9")
        with pytest.raises(UnknownMetricError, match="no-such-metric"):
            registry.resolve("no-such-metric")


class TestColdAndWarm:
    def test_cold_resolve_downloads_and_verifies(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub)
        resolved = registry.resolve(METRIC)
        assert resolved.kind is Kind.COMET_QE
        assert os.path.isfile(resolved.model)
        assert os.path.isfile(resolved.vocab)
        entry_dir = registry.entry_dir(METRIC)
        assert os.path.isfile(os.path.join(entry_dir, ".complete"))
        assert os.path.isfile(os.path.join(entry_dir, "entry.json"))
        with open_container(resolved.model) as container:
            assert container.manifest.like is Kind.COMET_QE

    def test_warm_resolve_makes_no_requests(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub)
        first = registry.resolve(METRIC)
        before = dict(stub.hits)
        again = fresh_registry(tmp_path, stub).resolve(METRIC)
        assert again == first
        assert dict(stub.hits) == before

    def test_revisions_are_cached_separately(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub)
        main = registry.resolve(METRIC)
        other = registry.resolve(METRIC, revision="pinned")
        assert main.model != other.model
        assert f"{os.sep}pinned{os.sep}" in other.model


class TestPoisonedCache:
    def test_corrupted_file_evicted_and_refetched(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub)
        resolved = registry.resolve(METRIC)
        with open(resolved.model, "r+b") as f:
            f.seek(200)
            byte = f.read(1)
            f.seek(200)
            f.write(bytes([byte[0] ^ 0xFF]))
        before = model_hits(stub)
        healed = fresh_registry(tmp_path, stub).resolve(METRIC)
        assert model_hits(stub) == before + 1
        with open_container(healed.model):
            pass

    def test_missing_sentinel_means_absent(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub)
        resolved = registry.resolve(METRIC)
        os.remove(os.path.join(registry.entry_dir(METRIC), ".complete"))
        before = model_hits(stub)
        fresh_registry(tmp_path, stub).resolve(METRIC)
        assert model_hits(stub) == before + 1
        assert os.path.isfile(resolved.model)


class TestOffline:
    def test_uncached_offline_is_a_distinct_error(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub, offline=True)
        before = dict(stub.hits)
        with pytest.raises(OfflineError, match="OFFLINE"):
            registry.resolve(METRIC)
        assert dict(stub.hits) == before
        assert not os.path.exists(os.path.join(registry.entry_dir(METRIC), ".complete"))

    def test_cached_offline_resolves(self, tmp_path, stub):
        fresh_registry(tmp_path, stub).resolve(METRIC)
        before = dict(stub.hits)
        resolved = fresh_registry(tmp_path, stub, offline=True).resolve(METRIC)
        assert os.path.isfile(resolved.model)
        assert dict(stub.hits) == before

    def test_offline_env_variable(self, tmp_path, stub, monkeypatch):
        monkeypatch.setenv("METRICFORGE_OFFLINE", "1")
        registry = fresh_registry(tmp_path, stub)
        assert registry.offline
        with pytest.raises(OfflineError):
            registry.resolve(METRIC)

    def test_cache_and_base_url_env_variables(self, tmp_path, stub, monkeypatch):
        monkeypatch.setenv("METRICFORGE_CACHE", str(tmp_path / "envcache"))
        monkeypatch.setenv("METRICFORGE_BASE_URL", stub.url)
        resolved = Registry().resolve(METRIC)
        assert resolved.model.startswith(str(tmp_path / "envcache"))


class TestDownloadErrors:
    def test_missing_remote_reports_url_and_code(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub)
        with pytest.raises(DownloadError, match="bleurt-20/entry.json.*404"):
            registry.resolve("bleurt-20")

    def test_sha_mismatch_rejected_and_not_marked_complete(self, tmp_path, stub):
        entry_path = os.path.join(stub.root, REMOTE, "entry.json")
        with open(entry_path, "r", encoding="utf-8") as f:
            original = f.read()
        data = json.loads(original)
        data["files"][0]["sha256"] = "0" * 64
        try:
            with open(entry_path, "w", encoding="utf-8") as f:
                json.dump(data, f)
            registry = fresh_registry(tmp_path, stub)
            with pytest.raises(DownloadError, match="sha256 mismatch"):
                registry.resolve(METRIC)
            assert not os.path.exists(
                os.path.join(registry.entry_dir(METRIC), ".complete")
            )
        finally:
            with open(entry_path, "w", encoding="utf-8") as f:
                f.write(original)

    def test_entry_must_list_one_model_and_one_vocab(self, tmp_path, stub):
        entry_path = os.path.join(stub.root, REMOTE, "entry.json")
        with open(entry_path, "r", encoding="utf-8") as f:
            original = f.read()
        data = json.loads(original)
        data["files"] = [f for f in data["files"] if not f["name"].endswith(".txt")]
        try:
            with open(entry_path, "w", encoding="utf-8") as f:
                json.dump(data, f)
            with pytest.raises(DownloadError, match="exactly one"):
                fresh_registry(tmp_path, stub).resolve(METRIC)
        finally:
            with open(entry_path, "w", encoding="utf-8") as f:
                f.write(original)


class TestResume:
    def test_partial_download_resumes_with_range(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub)
        served_model = os.path.join(stub.root, REMOTE, "model.mfrg")
        with open(served_model, "rb") as f:
            payload = f.read()
        entry_dir = registry.entry_dir(METRIC)
        os.makedirs(entry_dir, exist_ok=True)
        with open(os.path.join(entry_dir, "model.mfrg.part"), "wb") as f:
            f.write(payload[: len(payload) // 2])
        resolved = registry.resolve(METRIC)
        ranged = [r for path, r in stub.range_headers if path.endswith("model.mfrg")]
        assert f"bytes={len(payload) // 2}-" in ranged
        with open(resolved.model, "rb") as f:
            assert f.read() == payload

    def test_restart_when_server_ignores_range(self, tmp_path, stub):
        registry = fresh_registry(tmp_path, stub)
        served_model = os.path.join(stub.root, REMOTE, "model.mfrg")
        with open(served_model, "rb") as f:
            payload = f.read()
        entry_dir = registry.entry_dir(METRIC)
        os.makedirs(entry_dir, exist_ok=True)
        with open(os.path.join(entry_dir, "model.mfrg.part"), "wb") as f:
            f.write(b"\xff" * 100)  # stale junk a restart must discard
        stub.honor_range = False
        try:
            resolved = registry.resolve(METRIC)
        finally:
            stub.honor_range = True
        with open(resolved.model, "rb") as f:
            assert f.read() == payload


class TestLocking:
    def test_lock_timeout_is_reported(self, tmp_path, stub, monkeypatch):
        import metricforge.registry as registry_module

        monkeypatch.setattr(registry_module, "LOCK_TIMEOUT_S", 0.3)
        registry = fresh_registry(tmp_path, stub)
        lock_dir = os.path.join(registry.root, METRIC)
        os.makedirs(lock_dir, exist_ok=True)
        holder = open(os.path.join(lock_dir, "main.lock"), "a+b")
        try:
            fcntl.flock(holder.fileno(), fcntl.LOCK_EX)
            with pytest.raises(LockTimeoutError, match="main.lock"):
                registry.resolve(METRIC)
        finally:
            fcntl.flock(holder.fileno(), fcntl.LOCK_UN)
            holder.close()

    def test_two_processes_download_once(self, tmp_path, stub):
        cache_root = str(tmp_path / "cache")
        before = model_hits(stub)
        ctx = multiprocessing.get_context("fork")
        queue = ctx.Queue()
        workers = [
            ctx.Process(
                target=_resolve_in_child, args=(cache_root, stub.url, METRIC, queue)
            )
            for _ in range(2)
        ]
        for w in workers:
            w.start()
        results = [queue.get(timeout=30) for _ in workers]
        for w in workers:
            w.join(timeout=30)
        errors = [r for ok, r in results if not ok]
        assert errors == []
        paths = {r for ok, r in results if ok}
        assert len(paths) == 1
        assert model_hits(stub) == before + 1


def _resolve_in_child(cache_root, base_url, name, queue):
    try:
        resolved = Registry(root=cache_root, base_url=base_url).resolve(name)
        queue.put((True, resolved.model))
    except Exception as exc:  # queue must always receive an item
        queue.put((False, repr(exc)))
