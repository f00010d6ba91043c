"""Multi-shot EPI simulation and reconstruction engine."""

from .analysis import GFactorMap, TensorFit, dti_fit, fibonacci_directions, gfactor_pseudo_replica, nrmse
from .encoding import (GSliderEncoding, SamplingPlan, ShotOperator, ShotSpec,
                       WaveParams, WavePsf, adjoint_shot, encode_shot,
                       gslider_encode, shot_mask, sms_readout_extend, sms_split,
                       wave_build_psf, wave_decode, wave_encode)
from .epg import te_signal_epg, te_signal_epg_grid
from .grids import ComplexGrid
from .numerics import (CGResult, HankelLowRankConfig, cg_solve, dft_centered,
                       hankel_adjoint, hankel_build, hankel_occupancy,
                       low_rank_project)
from .phantom import (CoilSet, PhantomVolume, ShotPhase, Tissue, make_phantom,
                      simulate_coils, simulate_field_map, simulate_shot_phase)
from .quant import (Dictionary, ShuffleSystem, TemporalBasis, build_dictionary,
                    default_shuffle_sampling, expand_te_series, gslider_solve,
                    remove_background_phase, shuffling_gslider_solve, t2_match,
                    temporal_basis)
from .recon import (AcquisitionModel, ShotImageSet, buda_recon, combine_shots,
                    estimate_field_map, sense_recon, vc_augment,
                    wave_sense_recon)

__version__ = "0.1.0"
