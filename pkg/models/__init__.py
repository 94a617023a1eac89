# Models package for the NAFD cell-free mmWave lab

from .system_models import SystemConfig, Scenario
from .channel_models import AngleSet, ChannelSet, CovarianceSet
from .estimation_models import (
    PilotBlock,
    CouplingDesign,
    InterApEstimate,
    EquivalentEstimate,
    EstimateBundle
)
from .beamforming_models import (
    AnalogSet,
    DigitalPrecoder,
    DigitalCombiner,
    BeamformerSet,
    PowerAllocation
)
from .rate_models import DownlinkTerms, UplinkTerms, RateReport, OracleReport
from .training_models import TrainConfig, TrainLog
from .experiment_models import (
    ExperimentConfig,
    SuiteResult,
    ValidationReport,
    JobStatus,
    ErrorResponse,
    ValidationRequest,
    ExperimentRequest
)

__all__ = [
    'SystemConfig',
    'Scenario',
    'AngleSet',
    'ChannelSet',
    'CovarianceSet',
    'PilotBlock',
    'CouplingDesign',
    'InterApEstimate',
    'EquivalentEstimate',
    'EstimateBundle',
    'AnalogSet',
    'DigitalPrecoder',
    'DigitalCombiner',
    'BeamformerSet',
    'PowerAllocation',
    'DownlinkTerms',
    'UplinkTerms',
    'RateReport',
    'OracleReport',
    'TrainConfig',
    'TrainLog',
    'ExperimentConfig',
    'SuiteResult',
    'ValidationReport',
    'JobStatus',
    'ErrorResponse',
    'ValidationRequest',
    'ExperimentRequest'
]
