"""Exception types shared across the package.

Validation problems (bad arguments, bad config values) raise ContractError
or one of its subclasses; the CLI maps those to exit code 1.  Failures that
happen mid-run (NaN trajectories, unwritable output) raise SamplingError or
plain OSError and map to exit code 2.
"""


class ContractError(ValueError):
    """An argument or configuration value violates a documented precondition."""


class DegenerateReferenceError(ContractError):
    """The projection reference vector has (numerically) zero norm."""


class DegenerateBandwidthError(ContractError):
    """Automatic bandwidth selection failed because the data has zero spread."""


class SamplingError(RuntimeError):
    """A trajectory produced a non-finite state.

    Carries the step index and noise level where the failure surfaced.
    """

    def __init__(self, step_index: int, sigma: float):
        self.step_index = step_index
        self.sigma = sigma
        super().__init__(
            f"non-finite state at step {step_index} (sigma={sigma!r})"
        )
