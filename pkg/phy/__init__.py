# Physical-layer engine for the NAFD cell-free mmWave lab

from . import scenario, channel, estimation, beamforming, rates

__all__ = ['scenario', 'channel', 'estimation', 'beamforming', 'rates']
