"""Expected observations of the decoy-state protocol under the channel model."""

import logging

from backend.common.errors import DegenerateChannelError
from backend.data_model.protocol import ChannelModel, DecoyInputs, ObservedCounts

logger = logging.getLogger(__name__)


def channel_expectations(model: ChannelModel, inputs: DecoyInputs) -> ObservedCounts:
    """Expected per-intensity counts; error counts are normalized by Sum_j p_j D_j."""
    intensities, probabilities = inputs.intensities, inputs.probabilities
    detections = [p * model.detection_rate(k) for k, p in zip(intensities, probabilities)]
    errors = [p * model.error_rate(k) for k, p in zip(intensities, probabilities)]
    norm = sum(detections)
    if norm <= 0.0:
        raise DegenerateChannelError(
            f"no detections expected (eta={model.efficiency:.3g}, p_d={model.p_d})",
            field="channel",
        )
    return ObservedCounts(
        n_z=tuple(inputs.N_z * d / norm for d in detections),
        n_x=tuple(inputs.N_x * d / norm for d in detections),
        m_x=tuple(inputs.N_x * e / norm for e in errors),
    )


def default_theta_th(model: ChannelModel, inputs: DecoyInputs) -> float:
    """theta_th from the inputs, else the expected Z-basis QBER of the channel."""
    if inputs.theta_th is not None:
        return inputs.theta_th
    return model.expected_qber(inputs.intensities, inputs.probabilities)
