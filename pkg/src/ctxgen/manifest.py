"""Run manifests: checksum chaining between pipeline stages.

Every stage writes a ``<artifact>.manifest.json`` beside its primary output,
recording the stage name, the checksums of the exact inputs it consumed, a
config snapshot, the derived seed, and the checksums of everything it wrote.
A stage validates its inputs against these manifests before running, so a
dataset built from one vocabulary cannot silently train against another.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

from .errors import DependencyError

# Logical artifact name -> stage that produces it.
PRODUCERS = {
    "corpus": "(external input)",
    "sentences": "preprocess",
    "caps": "preprocess",
    "vocab": "build-vocab",
    "embeddings": "train-embeddings",
    "clusters": "cluster",
    "instances": "build-dataset",
    "checkpoint": "train-lm",
    "checkpoints": "train-lm",
    "metrics": "train-lm",
    "generation": "generate",
    "report": "evaluate",
    "lexicon": "(external input)",
}


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    stage: str
    seed: int
    config: dict
    inputs: dict[str, dict] = field(default_factory=dict)  # name -> {path, sha256}
    outputs: dict[str, dict] = field(default_factory=dict)
    created_at: str = ""

    def record_input(self, name: str, path: str) -> None:
        self.inputs[name] = {"path": os.path.abspath(path), "sha256": sha256_file(path)}

    def record_output(self, name: str, path: str) -> None:
        self.outputs[name] = {"path": os.path.abspath(path), "sha256": sha256_file(path)}


def manifest_path(artifact_path: str) -> str:
    return artifact_path + ".manifest.json"


def write_manifest(manifest: RunManifest, artifact_path: str) -> None:
    manifest.created_at = datetime.now(timezone.utc).isoformat()
    with open(manifest_path(artifact_path), "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(artifact_path: str) -> RunManifest | None:
    path = manifest_path(artifact_path)
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return RunManifest(
        stage=raw["stage"],
        seed=raw["seed"],
        config=raw["config"],
        inputs=raw["inputs"],
        outputs=raw["outputs"],
        created_at=raw.get("created_at", ""),
    )


def validate_inputs(stage: str, inputs: dict[str, str]) -> dict[str, str]:
    """Check existence, integrity, and cross-consistency of stage inputs.

    ``inputs`` maps logical names to paths.  Raises DependencyError naming
    the stage to rerun when an artifact is missing, was modified after its
    manifest was written, or was built against a different version of
    another input.  Returns the current checksums.
    """
    checksums: dict[str, str] = {}
    manifests: dict[str, RunManifest] = {}
    for name, path in inputs.items():
        if not os.path.exists(path):
            producer = PRODUCERS.get(name, "an earlier stage")
            raise DependencyError(
                f"{stage}: missing {name} artifact at {path}; run {producer} first",
                stage=producer,
            )
        checksums[name] = sha256_file(path)
        man = load_manifest(path)
        if man is not None:
            manifests[name] = man
            recorded = man.outputs.get(name)
            if recorded and recorded["sha256"] != checksums[name]:
                raise DependencyError(
                    f"{stage}: {name} at {path} was modified after it was built; "
                    f"rerun {man.stage}",
                    stage=man.stage,
                )
    for name, man in manifests.items():
        for other, path in inputs.items():
            recorded = man.inputs.get(other)
            if recorded and recorded["sha256"] != checksums[other]:
                raise DependencyError(
                    f"{stage}: {name} was built against a different {other} "
                    f"(checksum mismatch); rerun {man.stage}",
                    stage=man.stage,
                )
    return checksums


def derive_seed(run_seed: int, stage: str) -> int:
    """Stable per-stage seed fan-out from the single run-level seed."""
    digest = hashlib.sha256(f"{run_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")
