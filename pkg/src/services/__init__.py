"""Service layer for the experiment pipeline stages."""

from .trajectory_service import TrajectoryService, TrajectoryResults
from .profile_service import ProfileService, ProfileResults
from .expansion_service import ExpansionService, ExpansionResults
from .simulation_service import SimulationService, SimulationResults
from .analysis_service import AnalysisService, AnalysisResults

__all__ = [
    'TrajectoryService',
    'TrajectoryResults',
    'ProfileService',
    'ProfileResults',
    'ExpansionService',
    'ExpansionResults',
    'SimulationService',
    'SimulationResults',
    'AnalysisService',
    'AnalysisResults',
]
