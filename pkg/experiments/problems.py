"""
Problem Builders - Ground truth, degraded observation and posterior model for each experiment

Synthesis problems estimate transform coefficients; ``to_image`` maps an estimate back to
pixels so metrics are always computed against the pixel-domain ground truth.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Union

import numpy as np

from core.likelihoods import GaussianObservation, gaussian_likelihood, laplace_likelihood
from core.models import DomainTag, PosteriorModel, ThetaDomain
from core.regularisers import (
    block_l1_regulariser,
    elastic_net_regulariser,
    l1_regulariser,
    quadratic_regulariser,
    tv_regulariser,
    zero_regulariser,
)
from experiments.config import ExperimentConfig
from sapg.algorithms import UnknownNoiseModel
from transforms.blur import CirculantBlur, uniform_blur
from transforms.io import read_pgm
from transforms.metrics import psnr
from transforms.noise import NoiseKind, add_noise, sigma2_bounds_from_snr
from transforms.phantoms import laplace_coefficients, piecewise_constant_phantom
from transforms.wavelets import WaveletBasis, WaveletKind

logger = logging.getLogger(__name__)


def _identity(x):
    return x


@dataclass(eq=False)
class Problem:
    """Everything a command needs about one synthesised experiment"""
    name: str
    model: Union[PosteriorModel, UnknownNoiseModel]
    observation: np.ndarray
    ground_truth: np.ndarray
    sigma2: float
    x0: np.ndarray
    domain_tag: DomainTag = DomainTag.PIXEL
    to_image: Callable[[np.ndarray], np.ndarray] = _identity
    degraded: Optional[np.ndarray] = None
    sapg_updates: Dict = field(default_factory=dict)
    true_theta: Optional[float] = None

    def posterior(self, sigma2: Optional[float] = None) -> PosteriorModel:
        """The posterior model; for unknown-noise problems at the given (estimated) sigma2"""
        if isinstance(self.model, UnknownNoiseModel):
            return self.model.model(self.sigma2 if sigma2 is None else sigma2, check_dims=True)
        return self.model

    def input_psnr(self) -> Optional[float]:
        """PSNR of the degraded observation when it lives in the ground truth's domain"""
        if self.degraded is None or self.degraded.shape != self.ground_truth.shape:
            return None
        return psnr(self.degraded, self.ground_truth)


def _ground_truth_image(config: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    settings = config.input
    if settings.image:
        image = read_pgm(settings.image)
        peak = float(image.max()) or 1.0
        return settings.intensity_scale * image / peak
    if settings.phantom_seed is not None:
        rng = np.random.default_rng(settings.phantom_seed)
    return settings.intensity_scale * piecewise_constant_phantom(tuple(settings.size), rng)


def _theta_domain(config: ExperimentConfig, n_params: int) -> ThetaDomain:
    return config.sapg.theta_domain(n_params)


def _noisy(config: ExperimentConfig, clean: np.ndarray, rng: np.random.Generator):
    return add_noise(clean, config.noise.snr_db, NoiseKind(config.noise.kind), rng=rng)


def _likelihood(config: ExperimentConfig, y, sigma2, forward, adjoint, op_norm_sq):
    opts = config.model
    if opts.likelihood == "laplace":
        scale = float(np.sqrt(sigma2 / 2.0))
        smoothing = opts.laplace_smoothing if opts.laplace_smoothing is not None else sigma2
        return laplace_likelihood(y, scale, smoothing, forward, adjoint, op_norm_sq)
    return gaussian_likelihood(y, sigma2, forward, adjoint, op_norm_sq)


def _wavelet_regulariser(config: ExperimentConfig, basis: WaveletBasis):
    if config.model.block_group is not None:
        return block_l1_regulariser(basis.coeff_shape, basis.blocks(config.model.block_group))
    return l1_regulariser(basis.coeff_shape)


def denoise_synthesis_l1(config: ExperimentConfig, rng: np.random.Generator) -> Problem:
    """
    Coefficients x ~ exp(-theta ||x||_1) in a Haar basis, y = Psi x + noise.
    The estimation variable is x; f_y(x) = ||y - Psi x||^2 / (2 sigma^2).
    """
    basis = WaveletBasis(WaveletKind(config.model.wavelet), config.model.levels, tuple(config.input.size))
    true_theta = config.input.true_theta
    coeffs = laplace_coefficients(basis.coeff_shape, true_theta, rng)
    clean = basis.synthesis(coeffs)
    y, sigma2 = _noisy(config, clean, rng)

    regulariser = _wavelet_regulariser(config, basis)
    model = PosteriorModel(
        likelihood=_likelihood(config, y, sigma2, basis.synthesis, basis.analysis, 1.0),
        regulariser=regulariser,
        theta_domain=_theta_domain(config, regulariser.n_params),
        shape=basis.coeff_shape,
        domain_tag=DomainTag.COEFFICIENT,
        name="denoise-synthesis-l1",
    )
    return Problem(
        name=config.problem,
        model=model,
        observation=y,
        ground_truth=clean,
        sigma2=sigma2,
        x0=basis.analysis(y),
        domain_tag=DomainTag.COEFFICIENT,
        to_image=basis.synthesis,
        degraded=y,
        true_theta=true_theta,
    )


def _blurred(config: ExperimentConfig, rng: np.random.Generator):
    truth = _ground_truth_image(config, rng)
    blur = uniform_blur(truth.shape, config.model.blur_size)
    y, sigma2 = _noisy(config, blur.apply(truth), rng)
    return truth, blur, y, sigma2


def deblur_tv(config: ExperimentConfig, rng: np.random.Generator) -> Problem:
    """y = A x + noise with a uniform circulant blur, isotropic TV prior, sigma2 known"""
    truth, blur, y, sigma2 = _blurred(config, rng)
    regulariser = tv_regulariser(truth.shape, inner_iters=config.model.tv_inner_iters)
    model = PosteriorModel(
        likelihood=_likelihood(config, y, sigma2, blur.apply, blur.adjoint, blur.op_norm_sq),
        regulariser=regulariser,
        theta_domain=_theta_domain(config, 1),
        shape=truth.shape,
        name="deblur-tv",
    )
    return Problem(name=config.problem, model=model, observation=y, ground_truth=truth,
                   sigma2=sigma2, x0=y.copy(), degraded=y)


def deblur_wavelet_l1(config: ExperimentConfig, rng: np.random.Generator) -> Problem:
    """Synthesis formulation: image = Psi x with a Haar frame, y = A Psi x + noise, l1 prior on x"""
    truth, blur, y, sigma2 = _blurred(config, rng)
    basis = WaveletBasis(WaveletKind(config.model.wavelet), config.model.levels, truth.shape)

    def forward(x):
        return blur.apply(basis.synthesis(x))

    def adjoint(r):
        return basis.analysis(blur.adjoint(r))

    regulariser = _wavelet_regulariser(config, basis)
    model = PosteriorModel(
        likelihood=_likelihood(config, y, sigma2, forward, adjoint, blur.op_norm_sq),
        regulariser=regulariser,
        theta_domain=_theta_domain(config, regulariser.n_params),
        shape=basis.coeff_shape,
        domain_tag=DomainTag.COEFFICIENT,
        name="deblur-wavelet-l1",
    )
    return Problem(name=config.problem, model=model, observation=y, ground_truth=truth,
                   sigma2=sigma2, x0=basis.analysis(y), domain_tag=DomainTag.COEFFICIENT,
                   to_image=basis.synthesis, degraded=y)


def deblur_tv_unknown_sigma(config: ExperimentConfig, rng: np.random.Generator) -> Problem:
    """
    TV deblurring with sigma2 estimated jointly. Its bounds come from the a-priori SNR interval
    applied to the observation energy unless the sapg section sets them.
    """
    truth, blur, y, sigma2 = _blurred(config, rng)
    observation = GaussianObservation(y=y, forward=blur.apply, adjoint=blur.adjoint, op_norm_sq=blur.op_norm_sq)
    regulariser = tv_regulariser(truth.shape, inner_iters=config.model.tv_inner_iters)
    problem = UnknownNoiseModel(
        observation=observation,
        regulariser=regulariser,
        theta_domain=_theta_domain(config, 1),
        shape=truth.shape,
        name="deblur-tv-unknown-sigma",
    )
    lo, hi = sigma2_bounds_from_snr(y, config.noise.snr_low_db, config.noise.snr_high_db)
    updates = {}
    if config.sapg.sigma2_min is None:
        updates["sigma2_min"] = lo
    if config.sapg.sigma2_max is None:
        updates["sigma2_max"] = hi
    return Problem(name=config.problem, model=problem, observation=y, ground_truth=truth,
                   sigma2=sigma2, x0=y.copy(), degraded=y, sapg_updates=updates)


def custom(config: ExperimentConfig, rng: np.random.Generator) -> Problem:
    """Pixel-domain problem with a selectable regulariser and identity or blur operator"""
    truth = _ground_truth_image(config, rng)
    if config.custom.forward == "blur":
        blur: Optional[CirculantBlur] = uniform_blur(truth.shape, config.model.blur_size)
        forward, adjoint, norm_sq = blur.apply, blur.adjoint, blur.op_norm_sq
    else:
        forward, adjoint, norm_sq = _identity, _identity, 1.0
    y, sigma2 = _noisy(config, forward(truth), rng)

    shape = truth.shape
    builders = {
        "l1": lambda: l1_regulariser(shape),
        "ridge_l1": lambda: l1_regulariser(shape, ridge=config.custom.ridge),
        "quadratic": lambda: quadratic_regulariser(shape),
        "elastic_net": lambda: elastic_net_regulariser(shape),
        "tv": lambda: tv_regulariser(shape, inner_iters=config.model.tv_inner_iters),
        "zero": lambda: zero_regulariser(shape),
    }
    regulariser = builders[config.custom.regulariser]()
    model = PosteriorModel(
        likelihood=_likelihood(config, y, sigma2, forward, adjoint, norm_sq),
        regulariser=regulariser,
        theta_domain=_theta_domain(config, regulariser.n_params),
        shape=shape,
        name=f"custom-{regulariser.name}",
    )
    return Problem(name=config.problem, model=model, observation=y, ground_truth=truth,
                   sigma2=sigma2, x0=y.copy(), degraded=y)


BUILDERS = {
    "denoise_synthesis_l1": denoise_synthesis_l1,
    "deblur_tv": deblur_tv,
    "deblur_wavelet_l1": deblur_wavelet_l1,
    "deblur_tv_unknown_sigma": deblur_tv_unknown_sigma,
    "custom": custom,
}


def build_problem(config: ExperimentConfig, seed: np.random.SeedSequence) -> Problem:
    """Synthesise the problem of one repetition from its seed"""
    problem = BUILDERS[config.problem](config, np.random.default_rng(seed))
    logger.info(
        f"Built {problem.name}: shape={problem.model.shape}, sigma2={problem.sigma2:.4e}"
        + (f", input PSNR={problem.input_psnr():.2f} dB" if problem.input_psnr() is not None else "")
    )
    return problem
