# Services package for the NAFD cell-free mmWave lab
# experiment_service and validation_service depend on madrl and are imported directly

from .network_service import NetworkSimulator, NetworkSnapshot
from .checkpoint_service import (
    write_checkpoint, read_checkpoint, write_rows_csv, write_train_log_csv, write_json
)

__all__ = [
    'NetworkSimulator', 'NetworkSnapshot',
    'write_checkpoint', 'read_checkpoint', 'write_rows_csv', 'write_train_log_csv', 'write_json'
]
