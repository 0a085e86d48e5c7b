"""Firmware bundle builders and the asynchronous build queue.

Builders are in-process stubs selected by the hardware architecture from the
device descriptor.  A build packages the rendered platform configuration and
a manifest into a deterministic tar archive; the bundle digest covers every
manifest field, so identical configuration always produces an identical
digest.
"""

from __future__ import annotations

import hashlib
import io
import json
import tarfile
import threading
import uuid as uuidlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from meshdb.firmware.devices import DeviceRegistry
from meshdb.firmware.transform import PlatformRegistry


class NoBuilderError(Exception):
    code = "no-builder-for-architecture"


class ValidationFailedError(Exception):
    code = "validation-failed"

    def __init__(self, errors):
        super().__init__(f"{len(errors)} validation error(s)")
        self.errors = errors


class UnknownBuildError(Exception):
    code = "unknown-build"


@dataclass(frozen=True)
class FirmwareBundle:
    node_uuid: str
    platform: str
    architecture: str
    model_id: str
    platform_config: str
    builder_id: str
    digest: str

    def manifest(self) -> dict:
        return {
            "node_uuid": self.node_uuid,
            "platform": self.platform,
            "architecture": self.architecture,
            "model_id": self.model_id,
            "builder_id": self.builder_id,
            "digest": self.digest,
        }


def bundle_digest(
    node_uuid: str,
    platform: str,
    architecture: str,
    model_id: str,
    platform_config: str,
    builder_id: str,
) -> str:
    payload = json.dumps(
        {
            "node_uuid": node_uuid,
            "platform": platform,
            "architecture": architecture,
            "model_id": model_id,
            "platform_config": platform_config,
            "builder_id": builder_id,
        },
        sort_keys=True,
    ).encode()
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class Builder:
    builder_id: str
    architectures: frozenset[str]

    def build(self, bundle: FirmwareBundle) -> bytes:
        """Deterministic tar of manifest plus rendered platform config."""
        buf = io.BytesIO()
        with tarfile.open(fileobj=buf, mode="w") as tar:
            for name, blob in (
                ("manifest.json", json.dumps(bundle.manifest(), sort_keys=True, indent=2)),
                ("config.txt", bundle.platform_config),
            ):
                data = blob.encode()
                info = tarfile.TarInfo(name)
                info.size = len(data)
                info.mtime = 0
                tar.addfile(info, io.BytesIO(data))
        return buf.getvalue()


class BuildQueue:
    """Bounded worker pool running builds through queued/running/done states."""

    def __init__(
        self,
        devices: DeviceRegistry,
        platforms: PlatformRegistry,
        workers: int = 2,
    ):
        self.devices = devices
        self.platforms = platforms
        self._builders: list[Builder] = []
        self._jobs: dict[str, dict] = {}
        self._artifacts: dict[str, bytes] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="build")

    def register_builder(self, builder: Builder) -> None:
        self._builders.append(builder)

    def builder_for(self, architecture: str) -> Builder:
        for builder in self._builders:
            if architecture in builder.architectures:
                return builder
        raise NoBuilderError(f"no builder registered for architecture {architecture!r}")

    def submit(self, node_uuid: str, config: dict, model_id: str, platform: str) -> str:
        """Validate, dispatch by architecture and enqueue; returns the build id."""
        descriptor = self.devices.resolve(model_id)
        errors = self.platforms.validate(config, descriptor, platform)
        if errors:
            raise ValidationFailedError(errors)
        builder = self.builder_for(descriptor.architecture)
        build_id = uuidlib.uuid4().hex
        job = {
            "id": build_id,
            "node": node_uuid,
            "platform": platform,
            "model_id": model_id,
            "builder_id": builder.builder_id,
            "state": "queued",
            "bundle": None,
            "error": None,
        }
        with self._lock:
            self._jobs[build_id] = job
        self._pool.submit(self._run, build_id, config, descriptor, platform, builder)
        return build_id

    def _run(self, build_id, config, descriptor, platform, builder) -> None:
        job = self._jobs[build_id]
        job["state"] = "running"
        try:
            rendered = self.platforms.transform(config, descriptor, platform).render()
            digest = bundle_digest(
                job["node"],
                platform,
                descriptor.architecture,
                descriptor.model_id,
                rendered,
                builder.builder_id,
            )
            bundle = FirmwareBundle(
                job["node"],
                platform,
                descriptor.architecture,
                descriptor.model_id,
                rendered,
                builder.builder_id,
                digest,
            )
            archive = builder.build(bundle)
            with self._lock:
                self._artifacts[build_id] = archive
                job["bundle"] = bundle
                job["state"] = "done"
        except Exception as exc:  # noqa: BLE001 - job failures stay isolated
            with self._lock:
                job["error"] = str(exc)
                job["state"] = "failed"

    def status(self, build_id: str) -> dict:
        try:
            job = self._jobs[build_id]
        except KeyError:
            raise UnknownBuildError(f"no build {build_id}") from None
        out = {
            "id": job["id"],
            "node": job["node"],
            "platform": job["platform"],
            "model_id": job["model_id"],
            "builder_id": job["builder_id"],
            "state": job["state"],
            "error": job["error"],
        }
        if job["bundle"] is not None:
            out["bundle"] = job["bundle"].manifest()
        return out

    def artifact(self, build_id: str) -> Optional[bytes]:
        return self._artifacts.get(build_id)

    def wait(self, build_id: str, timeout: float = 10.0) -> dict:
        import time

        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            status = self.status(build_id)
            if status["state"] in ("done", "failed"):
                return status
            time.sleep(0.005)
        return self.status(build_id)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)
