"""Named trainable parameters with Adam state and checkpoint I/O."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Lazily-created named parameters, seeded init, Adam updates.

    Initialization is uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); identical
    seeds give bit-identical parameters and training trajectories on a
    single thread.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.step_count = 0
        self.epoch = 0

    def param(
        self, name: str, shape, fan_in: int | None = None, zero: bool = False, const: float | None = None
    ) -> Tensor:
        if name in self.params:
            assert self.params[name].data.shape == tuple(shape), f"shape clash for {name}"
            return self.params[name]
        if zero:
            data = np.zeros(shape)
        elif const is not None:
            data = np.full(shape, float(const))
        else:
            if fan_in is None:
                fan_in = shape[0] if len(shape) > 1 else max(shape[0], 1)
            bound = 1.0 / np.sqrt(fan_in)
            data = self.rng.uniform(-bound, bound, size=shape)
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        self.adam_m[name] = np.zeros(shape)
        self.adam_v[name] = np.zeros(shape)
        return t

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            if p.grad is None:
                continue
            m = self.adam_m[name]
            v = self.adam_v[name]
            m[:] = beta1 * m + (1.0 - beta1) * p.grad
            v[:] = beta2 * v + (1.0 - beta2) * p.grad**2
            m_hat = m / (1.0 - beta1**t)
            v_hat = v / (1.0 - beta2**t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)

    def save(self, directory):
        """JSON manifest + one little-endian float64 blob file."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = sorted(self.params)
        manifest = {
            "seed": self.seed,
            "epoch": self.epoch,
            "step_count": self.step_count,
            "params": [{"name": n, "shape": list(self.params[n].data.shape)} for n in names],
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
        with open(directory / "params.bin", "wb") as fh:
            for n in names:
                fh.write(self.params[n].data.astype("<f8").tobytes())
        with open(directory / "adam.bin", "wb") as fh:
            for n in names:
                fh.write(self.adam_m[n].astype("<f8").tobytes())
                fh.write(self.adam_v[n].astype("<f8").tobytes())

    def load(self, directory):
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        self.seed = manifest["seed"]
        self.epoch = manifest["epoch"]
        self.step_count = manifest["step_count"]
        blob = (directory / "params.bin").read_bytes()
        adam_blob_path = directory / "adam.bin"
        adam_blob = adam_blob_path.read_bytes() if adam_blob_path.exists() else None
        offset = 0
        a_off = 0
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
            offset += count * 8
            name = entry["name"]
            self.params[name] = Tensor(data.copy(), requires_grad=True, name=name)
            if adam_blob is not None:
                self.adam_m[name] = np.frombuffer(
                    adam_blob, dtype="<f8", count=count, offset=a_off
                ).reshape(shape).copy()
                a_off += count * 8
                self.adam_v[name] = np.frombuffer(
                    adam_blob, dtype="<f8", count=count, offset=a_off
                ).reshape(shape).copy()
                a_off += count * 8
            else:
                self.adam_m[name] = np.zeros(shape)
                self.adam_v[name] = np.zeros(shape)


def scheduled_lr(base_lr: float, epoch: int, decay: float = 0.8, every: int = 10) -> float:
    """Step decay: multiply the base rate by ``decay`` every ``every`` epochs."""
    return base_lr * decay ** (epoch // every)
