"""Exception types raised by the pdlc package."""


class PDLCError(ValueError):
    """Base class for every error raised on invalid input or infeasible setups."""


class InvalidParameterError(PDLCError):
    pass


class InfeasibleDutyCycleError(PDLCError):
    """The thermostat can never reach one edge of its band."""


class CapacityError(PDLCError):
    """Cooling capacity cannot serve the pool: s_on falls outside (0, 1)."""


class EmptyPoolError(PDLCError):
    pass


class InvalidQuotaError(PDLCError):
    pass


class NoValidPacketLengthError(PDLCError):
    pass


class NoFeasibleQuotaError(PDLCError):
    """alpha < beta for a room; the packet length is too coarse for the band."""


class InfeasibleWindowError(PDLCError):
    """sum(alpha) >= m*N >= sum(beta) does not hold for the window."""


class DivergentGainError(PDLCError):
    pass


class ScenarioError(PDLCError):
    """Scenario document failed validation; ``problems`` lists every issue."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
