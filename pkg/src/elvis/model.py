"""Container for every learnable parameter and the ablation switches they imply."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptors import ProjectedDescriptorSet, ProjectionParams, RawDescriptorSet, project
from .mlp import ScalarMLP
from .transport import DustbinHead, head_forward

VOTE_HIDDEN = 16
WARP_HIDDEN = 64


class VoteFunction(ScalarMLP):
    """Maps a refined similarity vote to a strength in (0, 1)."""


class WarpFunction(ScalarMLP):
    """Training-only warp of the pair score before binary cross-entropy."""


@dataclass
class Ablation:
    """Structural switches; all True is the full model."""

    dustbin: bool = True
    descriptor_gain: bool = True
    vote_function: bool = True
    warp_function: bool = True
    projection: bool = True

    @classmethod
    def from_name(cls, name: str) -> "Ablation":
        names = {
            "none": {},
            "no-dustbin": {"dustbin": False},
            "scalar-gain": {"descriptor_gain": False},
            "no-f": {"vote_function": False},
            "no-g": {"warp_function": False},
            "no-fg": {"vote_function": False, "warp_function": False},
            "no-projection": {"projection": False},
        }
        if name not in names:
            raise ValueError(f"unknown ablation {name!r}; choose from {sorted(names)}")
        return cls(**names[name])


@dataclass
class ModelParams:
    projection: ProjectionParams | None
    dustbin: DustbinHead | None
    dustbin_gain: np.ndarray | None  # shared scalar gain (no descriptor dependence)
    omega: np.ndarray | None
    f: VoteFunction | None
    g: WarpFunction | None

    @classmethod
    def init(
        cls,
        in_dim: int,
        dim: int = 128,
        rng: np.random.Generator | None = None,
        ablation: Ablation | None = None,
        score_scale: float = 1.0,
        ln_eps: float = 1e-5,
    ) -> "ModelParams":
        """Random initialization; ``score_scale`` sizes g's first layer to the typical score."""
        rng = rng if rng is not None else np.random.default_rng(0)
        ab = ablation or Ablation()
        if not ab.projection:
            dim = in_dim
        projection = ProjectionParams.init(in_dim, dim, rng, ln_eps) if ab.projection else None
        dustbin = dustbin_gain = omega = None
        if ab.dustbin:
            omega = np.array(1.0)
            if ab.descriptor_gain:
                dustbin = DustbinHead.init(dim, rng)
            else:
                dustbin_gain = np.array(0.0)
        f = VoteFunction.init(VOTE_HIDDEN, rng, increasing=True) if ab.vote_function else None
        g = WarpFunction.init(WARP_HIDDEN, rng, input_scale=score_scale, increasing=True) if ab.warp_function else None
        return cls(projection, dustbin, dustbin_gain, omega, f, g)

    # --- structure -----------------------------------------------------

    @property
    def uses_dustbin(self) -> bool:
        return self.omega is not None

    @property
    def ablation(self) -> Ablation:
        return Ablation(
            dustbin=self.uses_dustbin,
            descriptor_gain=self.dustbin is not None or not self.uses_dustbin,
            vote_function=self.f is not None,
            warp_function=self.g is not None,
            projection=self.projection is not None,
        )

    def named_tensors(self, include_warp: bool = True) -> dict[str, np.ndarray]:
        """Parameter arrays keyed by checkpoint name; values are the live arrays."""
        out = {}
        if self.projection is not None:
            p = self.projection
            out.update({
                "projection.weight": p.weight,
                "projection.bias": p.bias,
                "projection.ln_gain": p.ln_gain,
                "projection.ln_bias": p.ln_bias,
            })
        if self.dustbin is not None:
            h = self.dustbin
            out.update({"dustbin.w1": h.w1, "dustbin.b1": h.b1, "dustbin.w2": h.w2, "dustbin.b2": h.b2})
        if self.dustbin_gain is not None:
            out["dustbin.gain"] = self.dustbin_gain
        if self.omega is not None:
            out["omega"] = self.omega
        if self.f is not None:
            out.update({f"f.{k}": v for k, v in self.f.tensors().items()})
        if self.g is not None and include_warp:
            out.update({f"g.{k}": v for k, v in self.g.tensors().items()})
        return out

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], ln_eps: float = 1e-5) -> "ModelParams":
        t = {k: np.array(v, dtype=float) for k, v in tensors.items()}
        known = {
            "projection.weight", "projection.bias", "projection.ln_gain", "projection.ln_bias",
            "dustbin.w1", "dustbin.b1", "dustbin.w2", "dustbin.b2", "dustbin.gain", "omega",
        } | {f"{m}.{k}" for m in "fg" for k in ("w1", "b1", "w2", "b2")}
        unknown = set(t) - known
        if unknown:
            raise KeyError(f"unknown tensors in checkpoint: {sorted(unknown)}")

        def group(prefix, names):
            present = [f"{prefix}.{n}" in t for n in names]
            if any(present) and not all(present):
                raise KeyError(f"incomplete tensor group {prefix!r}")
            return [t[f"{prefix}.{n}"] for n in names] if all(present) else None

        proj = group("projection", ["weight", "bias", "ln_gain", "ln_bias"])
        head = group("dustbin", ["w1", "b1", "w2", "b2"])
        f = group("f", ["w1", "b1", "w2", "b2"])
        g = group("g", ["w1", "b1", "w2", "b2"])
        return cls(
            projection=ProjectionParams(*proj, eps=ln_eps) if proj else None,
            dustbin=DustbinHead(*head) if head else None,
            dustbin_gain=t.get("dustbin.gain"),
            omega=t.get("omega"),
            f=VoteFunction(*f) if f else None,
            g=WarpFunction(*g) if g else None,
        )

    def zeros_like(self) -> "ModelParams":
        z = ModelParams.from_tensors(
            {k: np.zeros_like(v) for k, v in self.named_tensors().items()},
            ln_eps=self.projection.eps if self.projection else 1e-5,
        )
        return z

    def copy(self) -> "ModelParams":
        return ModelParams.from_tensors(
            {k: v.copy() for k, v in self.named_tensors().items()},
            ln_eps=self.projection.eps if self.projection else 1e-5,
        )

    def without_warp(self) -> "ModelParams":
        return ModelParams(self.projection, self.dustbin, self.dustbin_gain, self.omega, self.f, None)

    def parameter_count(self, include_projection: bool = True, include_warp: bool = True) -> int:
        return sum(
            int(v.size)
            for k, v in self.named_tensors(include_warp=include_warp).items()
            if include_projection or not k.startswith("projection.")
        )

    # --- inference helpers --------------------------------------------

    def project(self, raw: RawDescriptorSet) -> ProjectedDescriptorSet:
        return project(raw, self.projection)

    def gains(self, descriptors: np.ndarray) -> np.ndarray | None:
        """Dustbin gains for projected columns (..., D, M), or None without dustbins."""
        if self.dustbin is not None:
            return head_forward(descriptors, self.dustbin)[0]
        if self.dustbin_gain is not None:
            return np.full(np.shape(descriptors)[:-2] + np.shape(descriptors)[-1:], float(self.dustbin_gain))
        return None
