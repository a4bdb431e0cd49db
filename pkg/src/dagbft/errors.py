"""
Exceptions raised by dagbft.

Protocol-level rejections (a peer sent us a bad block) are NOT exceptions -
those come back as a Verdict from verify_block. Everything here means the
caller, a config file or a log on disk is wrong.
"""
from typing import Optional


class DagBftError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(DagBftError):
    """A simulation config or validator setting failed validation."""


class CommitteeError(DagBftError):
    """Committee size is not of the form 3f + 1."""


class EncodingError(DagBftError):
    """Bytes could not be decoded into a block."""


class WalCorruptionError(DagBftError):
    """A write-ahead log record failed its checksum before the tail."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ScenarioParseError(DagBftError):
    """A .dag scenario file has a syntax error."""

    def __init__(self, message: str, line: int, column: int = 1, source: Optional[str] = None):
        where = f"{source}:" if source else ""
        super().__init__(f"{where}{line}:{column}: {message}")
        self.line = line
        self.column = column


class ScenarioBuildError(DagBftError):
    """A scenario parsed fine but its blocks do not form the DAG it claims."""


class SimulationError(DagBftError):
    """The simulator was driven into a state it cannot continue from."""


class DagIntegrityError(DagBftError):
    """A block was inserted into a DagState before all of its parents."""
