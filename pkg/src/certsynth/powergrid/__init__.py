"""Wind/storage frequency-regulation models and the four-bus and nine-bus case studies."""

from .network import DcFlowModel, dc_flows, dc_model, line_flow_outputs
from .params import GridParams, NetworkData, WtgParams, ninebus_network
from .scenarios import CaseStudy, build_fourbus, build_ninebus

__all__ = [
    "CaseStudy", "DcFlowModel", "GridParams", "NetworkData", "WtgParams", "build_fourbus",
    "build_ninebus", "dc_flows", "dc_model", "line_flow_outputs", "ninebus_network",
]
