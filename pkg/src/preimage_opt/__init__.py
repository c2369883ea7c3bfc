"""Preimage-aware black-box optimization over a finite pool of candidates.

Candidates that map to the same instruction key share one score. The
optimizer exploits this by spreading each query's score over the whole
preimage, choosing initial queries that cover the pool, and regularizing
its score predictor to agree within each preimage.
"""

from .core import PreimageGroup, PreimageIndex, RunRecord, ScoreLedger, best_candidate
from .engine import ARMS, CampaignConfig, run_campaign

__version__ = "0.1.0"

__all__ = ["ARMS", "CampaignConfig", "PreimageGroup", "PreimageIndex", "RunRecord",
           "ScoreLedger", "best_candidate", "run_campaign", "__version__"]
