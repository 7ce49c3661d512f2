from pydantic import BaseModel, Field
from typing import Dict, List, Optional


class ErrorReport(BaseModel):
    """Reconstruction error against a known bathymetry"""
    nrmse: float = Field(ge=0, description="RMS error over nodes divided by the truth range")
    nrmse_percent: float = Field(ge=0, description="nrmse x 100")
    rel_l2: float = Field(ge=0, description="Relative L2 error in percent")
    rel_linf: float = Field(ge=0, description="Relative max-norm error in percent")
    peak_height: float = Field(description="Maximum of the reconstruction in meters")

    def rows(self) -> List[tuple]:
        return list(self.model_dump().items())


class ChainStats(BaseModel):
    """Per-chain bookkeeping recorded in the ledger and the report"""
    chain_index: int
    seed: int
    n_samples: int
    burn_in: int
    acceptance_rate: float = Field(ge=0, le=1)
    mean_log_posterior: float
    final_scale: float = Field(gt=0, description="Proposal scale frozen at the end of burn-in")
    kept: bool = Field(description="Survived the mean log-posterior discard rule")


class SweepRecord(BaseModel):
    """One target value of a position or width sweep"""
    vary: str = Field(description="'position' or 'width'")
    target: float
    b_p_mean: Optional[float] = None
    b_p_se: Optional[float] = None
    b_w_mean: Optional[float] = None
    b_w_se: Optional[float] = None
    kept_chains: int = 0
    failed: bool = Field(default=False, description="No chain survived or the recovered position missed the target")


class ManifestEntry(BaseModel):
    path: str = Field(description="Path relative to the bundle directory")
    sha256: str
    bytes: int


class Manifest(BaseModel):
    """Index of every file written into an output bundle"""
    command: str
    version: str
    config_hash: str = Field(description="SHA-256 of the canonical JSON run configuration")
    seeds: List[int]
    rng: str
    constants: Dict[str, float] = Field(default_factory=dict, description="Additive constants folded into log-densities")
    files: List[ManifestEntry] = Field(default_factory=list)
