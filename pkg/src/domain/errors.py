"""
Exception hierarchy shared by every module
"""


class HybridClusterError(Exception):
    """Base class for all library errors"""


# Scenario / template validation

class ScenarioError(HybridClusterError):
    pass


class ScenarioInvalid(ScenarioError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(str(p) for p in self.problems) or "invalid scenario")


class UnknownSite(ScenarioError):
    pass


class QuotaInfeasible(ScenarioError):
    pass


class NoPublicIpAtFrontEnd(ScenarioError):
    pass


class BadBounds(ScenarioError):
    pass


class DuplicateSla(ScenarioError):
    pass


class SubnetOverlap(ScenarioError):
    pass


# Overlay planning

class OverlayError(HybridClusterError):
    pass


class NoPublicIpAvailable(OverlayError):
    pass


class EmptyPlacement(OverlayError):
    pass


class PrefixExhausted(OverlayError):
    pass


class UnassignedAddresses(OverlayError):
    pass


class Unreachable(OverlayError):
    pass


class NoBackupCentralPoint(OverlayError):
    pass


class DuplicateSubject(OverlayError):
    pass


# Orchestrator workflow

class OrchestratorError(HybridClusterError):
    pass


class Busy(OrchestratorError):
    """Another update is in flight; nothing was changed"""


class QuotaExceeded(OrchestratorError):
    pass


class NoEligibleSite(OrchestratorError):
    pass


class InvalidUpdate(OrchestratorError):
    pass


class InvalidTransition(OrchestratorError):
    pass


# Simulation engine

class SimulationError(HybridClusterError):
    pass


class NonTermination(SimulationError):
    pass


class UnknownNode(SimulationError):
    pass
