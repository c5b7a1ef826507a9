"""Twin-beam single-pixel imaging workbench.

Coherence-cell noise model for quantum-correlated probe/conjugate beams,
scrambled block Hadamard sensing, compressive acquisition with sub-shot-noise
readout, and total-variation reconstruction.
"""
from .acquisition import (AcquisitionConfig, MeasurementVector, RasterResult, compressive_acquire,
                          raster_scan, rastered_image, single_pixel_measure)
from .images import BeamImage
from .model import (CoherenceGrid, NoiseFigure, NoiseModel, NoLightError, SourceConfig, TwinBeamPair,
                    build_twin_pair, compose_loss, lowpass_fourier, mask_transmission,
                    monte_carlo_nrf, nrf, predicted_squeezing_single_mode)
from .reconstruct import (ReconstructionProblem, ReconstructionResult, psnr, reconstruct_ls,
                          reconstruct_tv, tv_norm)
from .sampling import MaskPair, SensingMatrix, hadamard, scrambled_block_hadamard, select_rows, to_mask_pairs
from .spectrum import Spectrum, SpectrumSettings, simulate_spectrum

__version__ = "0.1.0"
