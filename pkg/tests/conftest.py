"""
測試共用 fixture
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.dynamics.assembly import FeedbackParams
from src.plate.femrad import build_mode_space
from src.plate.forms import PlateConfig
from src.plate.geometry import Annulus


@pytest.fixture(scope="session")
def annulus():
    return Annulus(1.0, 2.0)


@pytest.fixture(scope="session")
def plate():
    return PlateConfig(0.3)


@pytest.fixture(scope="session")
def h_params():
    """(H)：|β₂| < β₁、|γ₂| < γ₁"""
    return FeedbackParams(beta1=2.0, beta2=1.0, gamma1=3.0, gamma2=-2.0, tau1=0.7, tau2=1.1)


@pytest.fixture(scope="session")
def small_gain_params():
    """延遲增益遠小於瞬時增益，準模態與共振測試使用"""
    return FeedbackParams(beta1=2.0, beta2=0.1, gamma1=3.0, gamma2=-0.2, tau1=0.7, tau2=1.1)


@pytest.fixture(scope="session")
def conservative_params():
    return FeedbackParams(beta1=0.0, beta2=0.0, gamma1=0.0, gamma2=0.0, tau1=0.7, tau2=1.1)


@pytest.fixture(scope="session")
def spaces(annulus, plate):
    """8 個元素的模態 0–3"""
    return {n: build_mode_space(annulus, plate, n, 8) for n in range(4)}


@pytest.fixture(scope="session")
def fine_space(annulus, plate):
    return build_mode_space(annulus, plate, 0, 64)


@pytest.fixture(scope="session")
def resolved_space(annulus, plate):
    """256 個元素：前 8 個 T 特徵對在 1e−6 下通過網格解析檢查"""
    return build_mode_space(annulus, plate, 0, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
