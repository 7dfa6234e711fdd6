"""Exception types shared across the pipeline.

Every error carries a stable ``code`` string so the CLI can map failures
to exit codes without string-matching messages.
"""


class DefnerError(Exception):
    code = "ERROR"


class ConfigError(DefnerError):
    code = "CONFIG_ERROR"


# corpus
class MalformedRecord(DefnerError):
    code = "MALFORMED_RECORD"


class UnknownLabel(DefnerError):
    code = "UNKNOWN_LABEL"


class DuplicateId(DefnerError):
    code = "DUPLICATE_ID"


# kb
class MalformedRow(DefnerError):
    code = "MALFORMED_ROW"


class DuplicateCui(DefnerError):
    code = "DUPLICATE_CUI"


# prompting
class MissingDescriptions(DefnerError):
    code = "MISSING_DESCRIPTIONS"


class PoolTooSmall(DefnerError):
    code = "POOL_TOO_SMALL"


# llm gateway
class TransportFailure(DefnerError):
    code = "TRANSPORT_FAILURE"


class AuthFailure(DefnerError):
    code = "AUTH_FAILURE"


class ReplayMiss(DefnerError):
    code = "REPLAY_MISS"


class ScriptExhausted(DefnerError):
    code = "SCRIPT_EXHAUSTED"


# eval
class UnalignedIds(DefnerError):
    code = "UNALIGNED_IDS"


# ablate
class DonorRequired(DefnerError):
    code = "DONOR_REQUIRED"


class EmptyDonorPool(DefnerError):
    code = "EMPTY_DONOR_POOL"


class EmptySource(DefnerError):
    code = "EMPTY_SOURCE"
