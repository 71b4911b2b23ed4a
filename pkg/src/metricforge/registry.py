"""Metric-name resolution: built-in name table, local cache, HTTP download.

Remote layout: for a metric whose remote id is ``org/repo``, the registry
fetches ``<base-url>/org/repo/entry.json`` describing the artifact files
(name, sha256, size; exactly one ``*.mfrg`` model container and one
``*.txt`` vocabulary), then each file from ``<base-url>/org/repo/<name>``.
Files land in ``<cache>/<metric-name>/<revision>/`` and a ``.complete``
sentinel is written only after every file verifies. Entries without the
sentinel are treated as absent. A warm cache is re-verified against the
stored entry.json on every resolve, so a corrupted entry is evicted and
fetched again instead of being served.

Environment: ``METRICFORGE_CACHE`` (cache root), ``METRICFORGE_OFFLINE=1``
(fail instead of downloading), ``METRICFORGE_BASE_URL`` (download host,
which is how tests point resolution at a local stub server).
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
import shutil
import time
import urllib.error
import urllib.request
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

from .container import read_manifest
from .errors import (
    DownloadError,
    LockTimeoutError,
    OfflineError,
    UnknownMetricError,
)
from .kinds import Kind

DEFAULT_BASE_URL = "https://huggingface.co"
DEFAULT_REVISION = "main"
LOCK_TIMEOUT_S = 60.0
_LOCK_POLL_S = 0.05
_FETCH_CHUNK = 1 << 16

# Built-in metric names. Checksums are not known ahead of time; they come
# from the entry.json each repository serves.
BUILTIN_METRICS = {
    "bleurt-20": ("marian-nmt/bleurt-20", Kind.BLEURT),
    "wmt20-comet-da": ("unbabel/wmt20-comet-da-marian", Kind.COMET),
    "wmt20-comet-qe-da": ("unbabel/wmt20-comet-qe-da-marian", Kind.COMET_QE),
    "wmt20-comet-qe-da-v2": ("unbabel/wmt20-comet-qe-da-v2-marian", Kind.COMET_QE),
    "wmt21-comet-da": ("unbabel/wmt21-comet-da-marian", Kind.COMET),
    "wmt21-comet-qe-da": ("unbabel/wmt21-comet-qe-da-marian", Kind.COMET_QE),
    "wmt21-comet-qe-mqm": ("unbabel/wmt21-comet-qe-mqm-marian", Kind.COMET_QE),
    "wmt22-comet-da": ("unbabel/wmt22-comet-da-marian", Kind.COMET),
    "wmt22-cometkiwi-da": ("unbabel/wmt22-cometkiwi-da-marian", Kind.COMET_QE),
    "wmt23-cometkiwi-da-xl": ("unbabel/wmt23-cometkiwi-da-xl-marian", Kind.COMET_QE),
    "wmt23-cometkiwi-da-xxl": ("unbabel/wmt23-cometkiwi-da-xxl-marian", Kind.COMET_QE),
    "cometoid22-wmt21": ("marian-nmt/cometoid22-wmt21", Kind.COMET_QE),
    "cometoid22-wmt22": ("marian-nmt/cometoid22-wmt22", Kind.COMET_QE),
    "cometoid22-wmt23": ("marian-nmt/cometoid22-wmt23", Kind.COMET_QE),
    "chrfoid-wmt23": ("marian-nmt/chrfoid-wmt23", Kind.COMET_QE),
}


@dataclass(frozen=True)
class FileStat:
    name: str
    sha256: str
    size: int


@dataclass
class RegistryEntry:
    name: str
    remote_id: str
    kind: Kind
    revision: str = DEFAULT_REVISION
    files: list = field(default_factory=list)

    @property
    def model_file(self) -> str:
        return next(f.name for f in self.files if f.name.endswith(".mfrg"))

    @property
    def vocab_file(self) -> str:
        return next(f.name for f in self.files if f.name.endswith(".txt"))


@dataclass(frozen=True)
class Resolved:
    model: str
    vocab: Optional[str]
    kind: Kind


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(_FETCH_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Registry:
    def __init__(self, root=None, base_url=None, offline=None):
        if root is None:
            root = os.environ.get("METRICFORGE_CACHE") or os.path.join(
                os.path.expanduser("~"), ".cache", "metricforge"
            )
        self.root = str(root)
        if base_url is None:
            base_url = os.environ.get("METRICFORGE_BASE_URL") or DEFAULT_BASE_URL
        self.base_url = base_url.rstrip("/")
        if offline is None:
            offline = os.environ.get("METRICFORGE_OFFLINE", "") == "1"
        self.offline = offline

    # -- cache layout ----------------------------------------------------

    def entry_dir(self, name, revision=DEFAULT_REVISION) -> str:
        return os.path.join(self.root, name, revision)

    def _sentinel(self, directory) -> str:
        return os.path.join(directory, ".complete")

    def _is_complete(self, directory) -> bool:
        return os.path.exists(self._sentinel(directory))

    @contextmanager
    def _entry_lock(self, name, revision):
        # The lock file lives beside the entry directory, not inside it,
        # so eviction cannot delete a held lock.
        os.makedirs(os.path.join(self.root, name), exist_ok=True)
        lock_path = os.path.join(self.root, name, revision + ".lock")
        handle = open(lock_path, "a+b")
        deadline = time.monotonic() + LOCK_TIMEOUT_S
        try:
            while True:
                try:
                    fcntl.flock(handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
                    break
                except OSError:
                    if time.monotonic() >= deadline:
                        raise LockTimeoutError(
                            f"timed out after {LOCK_TIMEOUT_S:.0f}s waiting for {lock_path}"
                        ) from None
                    time.sleep(_LOCK_POLL_S)
            yield
        finally:
            try:
                fcntl.flock(handle.fileno(), fcntl.LOCK_UN)
            finally:
                handle.close()

    def _load_cached_entry(self, name, revision, directory) -> RegistryEntry:
        with open(os.path.join(directory, "entry.json"), "r", encoding="utf-8") as f:
            data = json.load(f)
        remote_id, kind = BUILTIN_METRICS[name]
        return RegistryEntry(
            name=name,
            remote_id=remote_id,
            kind=kind,
            revision=revision,
            files=[FileStat(f["name"], f["sha256"], int(f["size"])) for f in data["files"]],
        )

    def _verify_entry(self, entry: RegistryEntry, directory) -> bool:
        for stat in entry.files:
            path = os.path.join(directory, stat.name)
            if not os.path.isfile(path) or os.path.getsize(path) != stat.size:
                return False
            if _sha256_file(path) != stat.sha256:
                return False
        return True

    def _evict(self, directory):
        shutil.rmtree(directory, ignore_errors=True)

    # -- network ---------------------------------------------------------

    def _fetch_entry(self, name, remote_id, kind, revision) -> RegistryEntry:
        url = f"{self.base_url}/{remote_id}/entry.json"
        try:
            with urllib.request.urlopen(url) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise DownloadError(f"no artifact at {url} (HTTP {exc.code})") from None
        except (urllib.error.URLError, OSError) as exc:
            raise DownloadError(f"cannot reach {url}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise DownloadError(f"malformed entry.json at {url}: {exc}") from None
        try:
            files = [FileStat(f["name"], f["sha256"], int(f["size"])) for f in data["files"]]
        except (TypeError, KeyError) as exc:
            raise DownloadError(f"malformed entry.json at {url}: missing {exc}") from None
        models = [f for f in files if f.name.endswith(".mfrg")]
        vocabs = [f for f in files if f.name.endswith(".txt")]
        if len(models) != 1 or len(vocabs) != 1:
            raise DownloadError(
                f"{url} must list exactly one .mfrg model and one .txt vocabulary, "
                f"got {len(models)} and {len(vocabs)}"
            )
        return RegistryEntry(name=name, remote_id=remote_id, kind=kind, revision=revision, files=files)

    def _fetch_file(self, url, dest, stat: FileStat):
        """GET with resume: an existing .part is continued via a Range
        request when the server honors it (206), else restarted."""
        part = dest + ".part"
        have = os.path.getsize(part) if os.path.exists(part) else 0
        headers = {"Range": f"bytes={have}-"} if 0 < have < stat.size else {}
        if have >= stat.size and have != 0:
            os.remove(part)
            have = 0
            headers = {}
        request = urllib.request.Request(url, headers=headers)
        try:
            resp = urllib.request.urlopen(request)
        except urllib.error.HTTPError as exc:
            raise DownloadError(f"no artifact at {url} (HTTP {exc.code})") from None
        except (urllib.error.URLError, OSError) as exc:
            raise DownloadError(f"cannot reach {url}: {exc}") from None
        with resp:
            resumed = headers and resp.status == 206
            with open(part, "ab" if resumed else "wb") as out:
                while True:
                    chunk = resp.read(_FETCH_CHUNK)
                    if not chunk:
                        break
                    out.write(chunk)
        actual = os.path.getsize(part)
        if actual != stat.size:
            os.remove(part)
            raise DownloadError(f"{url}: size mismatch (expected {stat.size}, got {actual})")
        digest = _sha256_file(part)
        if digest != stat.sha256:
            os.remove(part)
            raise DownloadError(
                f"{url}: sha256 mismatch (expected {stat.sha256}, got {digest})"
            )
        os.replace(part, dest)

    def download(self, entry: RegistryEntry, destination):
        """Fetch and verify every file of an entry into `destination`,
        then mark it complete."""
        os.makedirs(destination, exist_ok=True)
        for stat in entry.files:
            self._fetch_file(
                f"{self.base_url}/{entry.remote_id}/{stat.name}",
                os.path.join(destination, stat.name),
                stat,
            )
        listing = {
            "files": [{"name": f.name, "sha256": f.sha256, "size": f.size} for f in entry.files]
        }
        with open(os.path.join(destination, "entry.json"), "w", encoding="utf-8") as f:
            json.dump(listing, f, indent=2, sort_keys=True)
            f.write("\n")
        with open(self._sentinel(destination), "w", encoding="utf-8") as f:
            f.write("")

    # -- resolution --------------------------------------------------------

    def _paths_from(self, entry: RegistryEntry, directory) -> Resolved:
        return Resolved(
            model=os.path.join(directory, entry.model_file),
            vocab=os.path.join(directory, entry.vocab_file),
            kind=entry.kind,
        )

    def resolve(self, name_or_path, revision=DEFAULT_REVISION) -> Resolved:
        """Turn a metric name or a local path into concrete file paths.

        Local file paths pass through untouched (kind read from the
        manifest, vocab left to the caller). Names hit the cache first;
        a verified entry never touches the network.
        """
        if os.path.isfile(name_or_path):
            return Resolved(
                model=name_or_path, vocab=None, kind=read_manifest(name_or_path).like
            )
        if name_or_path not in BUILTIN_METRICS:
            raise UnknownMetricError(
                f"{name_or_path!r} is neither an existing file nor a known metric name"
            )
        remote_id, kind = BUILTIN_METRICS[name_or_path]
        directory = self.entry_dir(name_or_path, revision)

        if self._is_complete(directory):
            try:
                entry = self._load_cached_entry(name_or_path, revision, directory)
            except (OSError, json.JSONDecodeError, KeyError):
                entry = None
            if entry is not None and self._verify_entry(entry, directory):
                return self._paths_from(entry, directory)
            # Poisoned or unreadable cache entry: evict and fetch again.
            self._evict(directory)

        if self.offline:
            raise OfflineError(
                f"{name_or_path!r} is not cached and METRICFORGE_OFFLINE is set"
            )
        with self._entry_lock(name_or_path, revision):
            # Another process may have finished while this one waited.
            if self._is_complete(directory):
                entry = self._load_cached_entry(name_or_path, revision, directory)
                if self._verify_entry(entry, directory):
                    return self._paths_from(entry, directory)
                self._evict(directory)
            entry = self._fetch_entry(name_or_path, remote_id, kind, revision)
            self.download(entry, directory)
        return self._paths_from(entry, directory)
