"""Switched-system model, compensator realization and topology templates."""

from .model import (CONSTANT_ON_TIME, FIXED_FREQUENCY, ControlScheme, ConverterModel, RampSpec,
                    SwitchedSystem, TransferFunction)
from .io import load_model, loads, model_from_dict, model_to_dict, save_model
from .realization import compose_plant_compensator, state_space_to_tf, tf_to_state_space
from .topologies import EXAMPLES, TEMPLATES, build_example, build_model

__all__ = [
    "CONSTANT_ON_TIME", "FIXED_FREQUENCY", "ControlScheme", "ConverterModel", "RampSpec",
    "SwitchedSystem", "TransferFunction", "compose_plant_compensator", "state_space_to_tf",
    "tf_to_state_space", "load_model", "loads", "model_from_dict", "model_to_dict", "save_model",
    "EXAMPLES", "TEMPLATES", "build_example", "build_model",
]
