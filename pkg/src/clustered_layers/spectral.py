"""Fourier tools for 1-periodic samples on a uniform grid theta_i = i/m."""

from __future__ import annotations

import numpy as np


def wavenumbers(m: int) -> np.ndarray:
    """Integer wavenumbers in FFT order, Nyquist mode set to zero for odd derivatives."""
    return np.fft.fftfreq(m, d=1.0 / m)


def derivative(f: np.ndarray, order: int = 1, period: float = 1.0) -> np.ndarray:
    """Spectral derivative along axis 0 of real periodic samples."""
    f = np.asarray(f, dtype=float)
    m = f.shape[0]
    k = wavenumbers(m)
    if order % 2 == 1 and m % 2 == 0:
        k = k.copy()
        k[m // 2] = 0.0
    mult = (2j * np.pi * k / period) ** order
    shape = (m,) + (1,) * (f.ndim - 1)
    return np.real(np.fft.ifft(mult.reshape(shape) * np.fft.fft(f, axis=0), axis=0))


def antiderivative_zero_mean(f: np.ndarray, period: float = 1.0) -> np.ndarray:
    """Periodic antiderivative of a zero mean sample set (the mean is discarded)."""
    m = f.shape[0]
    k = wavenumbers(m)
    F = np.fft.fft(f, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = np.where(k == 0, 0.0, period / (2j * np.pi * k))
    if m % 2 == 0:
        mult[m // 2] = 0.0
    shape = (m,) + (1,) * (f.ndim - 1)
    return np.real(np.fft.ifft(mult.reshape(shape) * F, axis=0))


def evaluate(f: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of the samples evaluated at arbitrary theta."""
    f = np.asarray(f, dtype=float)
    m = f.shape[0]
    c = np.fft.fft(f, axis=0) / m
    k = wavenumbers(m)
    weights = np.ones(m)
    if m % 2 == 0:
        # split the Nyquist mode symmetrically so the interpolant is real
        weights[m // 2] = 0.5
    theta = np.asarray(theta, dtype=float)
    phase = np.exp(2j * np.pi * np.outer(theta.ravel(), k)) * weights
    out = phase @ c
    if m % 2 == 0:
        out = out + 0.5 * np.outer(np.exp(1j * np.pi * m * theta.ravel()), c[m // 2]).reshape(out.shape)
    return np.real(out).reshape(theta.shape + f.shape[1:])


def resample(f: np.ndarray, m_new: int) -> np.ndarray:
    """Samples of the same trigonometric interpolant on a grid with ``m_new`` nodes."""
    return evaluate(f, np.arange(m_new) / m_new)


def mean(f: np.ndarray) -> float:
    """Integral over one period (period 1) by the periodic trapezoid rule."""
    return float(np.mean(f, axis=0))


def fourier_basis(m: int, modes: int) -> np.ndarray:
    """Columns 1, cos(2 pi k theta), sin(2 pi k theta) for k = 1..modes."""
    theta = np.arange(m) / m
    cols = [np.ones(m)]
    for k in range(1, modes + 1):
        cols.append(np.cos(2 * np.pi * k * theta))
        cols.append(np.sin(2 * np.pi * k * theta))
    return np.column_stack(cols)
