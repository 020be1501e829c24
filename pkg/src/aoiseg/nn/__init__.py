"""Q-network, replay buffer and the Double-DQN training loop."""

from .gradcheck import grad_check  # noqa: F401
from .network import NetworkShape, QNetwork, RMSprop  # noqa: F401
from .replay import ReplayBuffer  # noqa: F401
from .train import (  # noqa: F401
    EpisodeStats,
    TrainConfig,
    TrainResult,
    epsilon_for,
    select_action,
    td_target,
    train,
)
