"""Domain types shared by every part of the simulator.

All times are simulated seconds (floats) and all sizes are bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class ReturnCode(enum.Enum):
    OK = "OK"
    NO_DESTINATION = "NoDestination"
    DROPPED = "Dropped"


@dataclass(frozen=True, order=True)
class LambdaClass:
    """A lambda function type, e.g. ``face_detection``.

    ``output_ratio`` is the response size as a fraction of the input size.
    """

    name: str
    output_ratio: float = field(default=1.0, compare=False)

    def __post_init__(self):
        if self.output_ratio < 0:
            raise ValueError(f"output_ratio must be >= 0, got {self.output_ratio}")

    def output_size(self, input_size: float) -> int:
        return max(1, int(round(self.output_ratio * input_size)))


@dataclass(frozen=True)
class LambdaRequest:
    cls: LambdaClass
    input_size: int
    client_id: str
    issue_time: float
    dry_run: bool = False

    def __post_init__(self):
        if self.input_size <= 0:
            raise ValueError(f"input_size must be positive, got {self.input_size}")


@dataclass(frozen=True)
class LambdaResponse:
    return_code: ReturnCode
    output_size: int = 0
    executor_id: str | None = None
    processing_time: float = 0.0
    reported_load: float = 0.0

    def __post_init__(self):
        if self.processing_time < 0:
            raise ValueError(f"negative processing time {self.processing_time}")
        if not 0.0 <= self.reported_load <= 1.0:
            raise ValueError(f"reported load {self.reported_load} outside [0, 1]")


@dataclass(frozen=True)
class TransactionRecord:
    """A completed request/response pair and the delay measured by the observer."""

    request: LambdaRequest
    response: LambdaResponse
    delay: float

    @property
    def ok(self) -> bool:
        return self.response.return_code is ReturnCode.OK

    @property
    def dispatch_latency(self) -> float:
        return derive_comm_latency(self)


def derive_comm_latency(record: TransactionRecord) -> float:
    """Communication latency: the measured delay minus the reported processing time."""
    if record.response.return_code is not ReturnCode.OK:
        raise ValueError(
            f"cannot derive latency from a {record.response.return_code.value} response")
    return record.delay - record.response.processing_time
