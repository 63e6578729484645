"""Frequency-domain beamforming with arbitrary Green's functions."""

__version__ = "0.1.0"

from .errors import GfBeamError
from .scene import (
    FocusGrid,
    MicrophoneArray,
    Panel,
    ReflectorSet,
    Scene,
    Source,
    build_focus_grid,
    build_ring_array,
    load_scene,
    reference_scene,
    validate_scene,
)
from .greens import (
    FreeFieldProvider,
    GfTensor,
    IsmProvider,
    evaluate_gf_tensor,
    export_gf_file,
    freefield_gf,
    import_gf_file,
    ism_gf,
)
from .csm import Csm, TimeRecord, WelchParams, read_record, remove_diagonal, synthetic_csm, welch_csm
from .steering import (
    PRESETS,
    SteeringParams,
    check_amplitude_condition,
    check_local_max_condition,
    steering_set,
    steering_vector,
)
from .beamform import SourceMap, dirty_map, psf_map, td_beamform, td_spectrum
from .metrics import (
    MapCriteria,
    aggregate,
    evaluate_map,
    level_error,
    msr,
    resolution,
    spatial_deviation,
    spr,
)
