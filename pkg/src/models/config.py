"""Simulation configuration model."""

import math
import re
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.numerics.dynamics import MassCostLaw
from src.numerics.grid import DiffusionLaw, Domain, Grid

Mode = Literal["full", "quantization", "lloyd", "jko1d"]

_CALL = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


def _split_call(token: str) -> tuple[str, list[str]]:
    """Split ``name(arg, ...)`` into its name and stripped arguments."""
    match = _CALL.match(token)
    if match is None:
        raise ValueError(f"cannot parse {token!r}")
    name, args = match.group(1), match.group(2)
    if args is None:
        return name, []
    return name, [part.strip() for part in args.split(",")]


class InitDensity(BaseModel):
    """Initial density: ``uniform``, ``gaussian(cx,cy,sigma)`` or ``file(path)``."""

    kind: Literal["uniform", "gaussian", "file"] = "uniform"
    cx: float = 0.5
    cy: float = 0.5
    sigma: float = Field(default=0.1, gt=0)
    path: Path | None = None

    @model_validator(mode="before")
    @classmethod
    def _parse_token(cls, data: Any) -> Any:
        if not isinstance(data, str):
            return data
        name, args = _split_call(data)
        if name == "uniform" and not args:
            return {"kind": "uniform"}
        if name == "gaussian" and len(args) == 3:
            cx, cy, sigma = (float(arg) for arg in args)
            return {"kind": "gaussian", "cx": cx, "cy": cy, "sigma": sigma}
        if name == "file" and len(args) == 1 and args[0]:
            return {"kind": "file", "path": args[0]}
        raise ValueError(
            "init_density must be uniform, gaussian(cx,cy,sigma) or file(path)"
        )


class InitAtoms(BaseModel):
    """Initial atoms: ``random`` (seeded) or ``file(path)`` (atoms CSV)."""

    kind: Literal["random", "file"] = "random"
    path: Path | None = None

    @model_validator(mode="before")
    @classmethod
    def _parse_token(cls, data: Any) -> Any:
        if not isinstance(data, str):
            return data
        name, args = _split_call(data)
        if name == "random" and not args:
            return {"kind": "random"}
        if name == "file" and len(args) == 1 and args[0]:
            return {"kind": "file", "path": args[0]}
        raise ValueError("init_atoms must be random or file(path)")


class SimulationConfig(BaseModel):
    """Every parameter of a run.

    ``alpha = sqrtN`` resolves to sqrt(n_atoms) and ``ot_tol = auto`` to
    ``None`` (grid-resolution tolerance) at validation time.
    """

    model_config = ConfigDict(extra="forbid")

    mode: Mode = Field(
        default="quantization",
        description="full, quantization, lloyd or jko1d",
    )
    nx: int = Field(default=128, ge=1, description="Grid cells along x")
    ny: int = Field(default=128, ge=1, description="Grid cells along y")
    domain: Domain = Field(
        default_factory=Domain, description="x_min, x_max, y_min, y_max"
    )
    n_atoms: int = Field(default=50, ge=0, description="Number of atoms")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Random seed")
    tau: float = Field(default=0.01, gt=0, description="Macro time step")
    alpha: float = Field(
        default=1.0, ge=0, description="Atom mobility (number or sqrtN)"
    )
    steps: int = Field(default=200, ge=0, description="Number of steps")
    snapshot_every: int = Field(
        default=10, ge=1, description="Steps between snapshots"
    )
    diffusion: Literal["linear", "pme"] = Field(
        default="linear", description="Internal energy: linear (entropy) or pme"
    )
    m: float = Field(default=2.0, gt=1, description="Porous-medium exponent")
    g_kappa: float = Field(default=1.0, gt=0, description="Mass cost scale")
    g_beta: float = Field(default=0.5, description="Mass cost exponent in (0,1)")
    a_min: float = Field(
        default=1e-6, gt=0, lt=1, description="Absorption threshold for weights"
    )
    psi_sign: Literal["el", "intro"] = Field(
        default="el", description="Sign of the potential in the weight equation"
    )
    atom_rate: Literal["auto", "gradient", "barycentric"] = Field(
        default="auto", description="Atom velocity scaling"
    )
    ot_tol: float | None = Field(
        default=None, gt=0, description="Dual solver tolerance (auto: grid-based)"
    )
    ot_max_iter: int = Field(
        default=2000, ge=1, description="Dual solver iteration cap"
    )
    cfl_safety: float = Field(
        default=0.4, gt=0, le=1, description="CFL safety factor"
    )
    init_density: InitDensity = Field(
        default_factory=InitDensity,
        description="uniform, gaussian(cx,cy,sigma) or file(path)",
    )
    init_atoms: InitAtoms = Field(
        default_factory=InitAtoms, description="random or file(path)"
    )
    out_dir: Path = Field(
        default=Path("dynquant-out"), description="Output directory"
    )
    jko_nx: int = Field(default=512, ge=2, description="1D oracle grid cells")
    jko_inner_tol: float = Field(
        default=1e-10, gt=0, description="1D inner stationarity tolerance"
    )
    jko_inner_max_iter: int = Field(
        default=5000, ge=1, description="1D inner iteration cap"
    )
    energy_slack_factor: float = Field(
        default=10.0, ge=0, description="Allowed energy rise per step, in tau^2"
    )

    @model_validator(mode="before")
    @classmethod
    def _resolve_tokens(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        if str(data.get("alpha", "")).strip() == "sqrtN":
            n_atoms = int(data.get("n_atoms", cls.model_fields["n_atoms"].default))
            data["alpha"] = math.sqrt(n_atoms)
        if str(data.get("ot_tol", "")).strip() == "auto":
            data["ot_tol"] = None
        return data

    @field_validator("domain", mode="before")
    @classmethod
    def _parse_domain(cls, value: Any) -> Any:
        if isinstance(value, str):
            parts = [part.strip() for part in value.split(",")]
            if len(parts) != 4:
                raise ValueError("domain must be x_min, x_max, y_min, y_max")
            x_min, x_max, y_min, y_max = (float(part) for part in parts)
            return {"x_min": x_min, "x_max": x_max, "y_min": y_min, "y_max": y_max}
        return value

    @field_validator("g_beta")
    @classmethod
    def _check_beta(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("g_beta must lie in (0,1)")
        return value

    @model_validator(mode="after")
    def _check_atoms(self) -> "SimulationConfig":
        if self.n_atoms == 0 and self.mode != "jko1d":
            raise ValueError("n_atoms must be positive outside jko1d mode")
        return self

    def grid(self) -> Grid:
        return Grid(domain=self.domain, nx=self.nx, ny=self.ny)

    def diffusion_law(self) -> DiffusionLaw:
        return DiffusionLaw(kind=self.diffusion, m=self.m)

    def mass_cost_law(self) -> MassCostLaw:
        return MassCostLaw(kappa=self.g_kappa, beta=self.g_beta)
