"""
Scenario service: geometry, path loss, channel synthesis and the CSI-error ball
"""

import configparser
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from starswipt.core.exceptions import ConfigError, DomainError
from starswipt.schemas.scenario import ChannelSet, ScenarioConfig

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator]

# Half-wavelength uniform linear arrays; RIS elements along y, BS antennas along x
_RIS_AXIS = np.array([0.0, 1.0, 0.0])
_BS_AXIS = np.array([1.0, 0.0, 0.0])


def make_rng(seed: Seed) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams on every platform"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def path_loss_exponent(d: float, h_ris: float, exp_los: float, exp_nlos: float,
                       lambda1: float, lambda2: float) -> float:
    """Elevation-dependent exponent between the LoS and NLoS values

    The LoS weight is the logistic 1 / (1 + l1 exp(-l2 (phi - l1))) of the
    elevation angle phi in degrees, so the exponent falls towards exp_los as
    the link gets steeper.
    """
    if h_ris <= 0.0:
        raise DomainError(f"RIS height must be positive, got {h_ris}")
    if d < h_ris:
        raise DomainError(f"distance {d} m is shorter than the RIS height {h_ris} m")
    phi = math.degrees(math.asin(min(1.0, h_ris / d)))
    p_los = 1.0 / (1.0 + lambda1 * math.exp(-lambda2 * (phi - lambda1)))
    return (exp_los - exp_nlos) * p_los + exp_nlos


def hop_path_gain(cfg: ScenarioConfig, d: float, h_ris: float) -> float:
    """Large-scale power gain of one hop: hop gain times d^(-alpha)"""
    alpha = path_loss_exponent(d, h_ris, cfg.exp_los, cfg.exp_nlos, cfg.lambda1, cfg.lambda2)
    return cfg.hop_gain * d ** (-alpha)


def place_users(cfg: ScenarioConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """IRs on the transmission side (+x), UERs on the reflection side (-x), ground level"""
    ris = np.asarray(cfg.ris_pos, dtype=float)

    def disc(count: int, sign: float) -> np.ndarray:
        radius = cfg.user_radius * np.sqrt(rng.uniform(size=count))
        angle = rng.uniform(0.0, 2.0 * np.pi, size=count)
        x = ris[0] + sign * cfg.user_offset + radius * np.cos(angle)
        y = ris[1] + radius * np.sin(angle)
        return np.column_stack([x, y, np.zeros(count)])

    return disc(cfg.n_ir, 1.0), disc(cfg.n_uer, -1.0)


def steering(n: int, cos_angle: float) -> np.ndarray:
    return np.exp(1j * np.pi * np.arange(n) * cos_angle)


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) entries"""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def fading_block(rng: np.random.Generator, shape, path_gain: float, rician_k: float = 0.0,
                 los: Optional[np.ndarray] = None) -> np.ndarray:
    """sqrt(gain) * (sqrt(K/(K+1)) LoS + sqrt(1/(K+1)) CN(0, 1))"""
    scatter = complex_gaussian(rng, shape)
    if rician_k > 0.0 and los is not None:
        block = np.sqrt(rician_k / (rician_k + 1.0)) * los + np.sqrt(1.0 / (rician_k + 1.0)) * scatter
    else:
        block = scatter
    return np.sqrt(path_gain) * block


def synthesize_channels(cfg: ScenarioConfig) -> ChannelSet:
    """Draw one channel realization from cfg.seed"""
    rng = make_rng(cfg.seed)
    bs = np.asarray(cfg.bs_pos, dtype=float)
    ris = np.asarray(cfg.ris_pos, dtype=float)
    irs, uers = place_users(cfg, rng)

    link = ris - bs
    d_bs = float(np.linalg.norm(link))
    los_h = np.outer(
        steering(cfg.n_ris, float(-link @ _RIS_AXIS) / d_bs),
        steering(cfg.n_tx, float(link @ _BS_AXIS) / d_bs).conj(),
    )
    H = fading_block(rng, (cfg.n_ris, cfg.n_tx), hop_path_gain(cfg, d_bs, ris[2] - bs[2]), cfg.rician_k, los_h)

    def user_vectors(positions: np.ndarray) -> np.ndarray:
        rows = []
        for pos in positions:
            offset = pos - ris
            d = float(np.linalg.norm(offset))
            los = steering(cfg.n_ris, float(offset @ _RIS_AXIS) / d)
            rows.append(fading_block(rng, cfg.n_ris, hop_path_gain(cfg, d, ris[2]), cfg.rician_k, los))
        return np.array(rows)

    g_t = user_vectors(irs)
    g_r_hat = user_vectors(uers)
    logger.debug("channels for seed %d: |H|=%.3g", cfg.seed, np.linalg.norm(H))
    return ChannelSet(H=H, g_t=g_t, g_r_hat=g_r_hat, nu=cfg.nu)


def sample_uncertainty(g_hat: np.ndarray, nu: float, seed: Seed,
                       n_samples: Optional[int] = None) -> np.ndarray:
    """Uniform draw(s) from the complex ball ||dg|| <= nu around g_hat's dimension"""
    if nu < 0.0:
        raise DomainError(f"uncertainty radius must be nonnegative, got {nu}")
    m = np.asarray(g_hat).shape[-1]
    count = 1 if n_samples is None else n_samples
    if nu == 0.0:
        out = np.zeros((count, m), dtype=complex)
        return out[0] if n_samples is None else out
    rng = make_rng(seed)
    direction = complex_gaussian(rng, (count, m))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    # 2m real dimensions: radius ~ U^(1/2m)
    radius = nu * rng.uniform(size=count) ** (1.0 / (2 * m))
    out = direction * radius[:, None]
    return out[0] if n_samples is None else out


def parse_config_text(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    if not any(line.strip().startswith("[") for line in text.splitlines()):
        text = "[scenario]\n" + text
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if len(parser.sections()) > 1:
        raise ConfigError(f"{source}: expected a single section, found {parser.sections()}")

    values: Dict[str, Any] = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in ScenarioConfig.model_fields:
                raise ConfigError(f"{source}: unknown key '{key}'")
            values[key] = raw.strip()
    return build_config(values, source)


def build_config(values: Dict[str, Any], source: str = "<arguments>") -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(values)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"{source}: {problems}") from exc


def load_config(path: Union[str, Path, None]) -> ScenarioConfig:
    """Read a flat key = value file; no path means all defaults"""
    if path is None:
        return ScenarioConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


def override_config(cfg: ScenarioConfig, **changes: Any) -> ScenarioConfig:
    """Validated copy with fields replaced; invalid values become ConfigError"""
    data = cfg.model_dump()
    unknown = set(changes) - set(data)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}")
    data.update(changes)
    return build_config(data)
