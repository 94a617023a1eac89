# Multi-agent learners for NAFD power allocation

from .networks import Mlp, AdamState, finite_difference_gradients, gradient_relative_error
from .replay import ReplayBuffer
from .environment import AgentRole, PowerControlEnv, agent_roles, build_observation, action_to_power
from .agents import (
    AgentEnsemble, matd3_target, critic_update, actor_update, soft_update,
    update_agents, baseline_allocation
)
from .trainer import Trainer, train, load_policy

__all__ = [
    'Mlp', 'AdamState', 'finite_difference_gradients', 'gradient_relative_error',
    'ReplayBuffer',
    'AgentRole', 'PowerControlEnv', 'agent_roles', 'build_observation', 'action_to_power',
    'AgentEnsemble', 'matd3_target', 'critic_update', 'actor_update', 'soft_update',
    'update_agents', 'baseline_allocation',
    'Trainer', 'train', 'load_policy'
]
