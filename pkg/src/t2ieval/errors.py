"""Exception hierarchy shared across the harness."""


class GatewayError(Exception):
    """Base class for failures talking to a model endpoint."""


class TransportError(GatewayError):
    """Network or HTTP failure that survived the retry budget."""


class MalformedReplyError(GatewayError):
    """Endpoint answered, but not in the expected shape."""


class SafetyRefusalError(GatewayError):
    """Image endpoint refused the prompt; callers record a null score."""


class ScoringUnsupportedError(GatewayError):
    """Endpoint cannot return token log-probabilities; callers may fall back."""


class ReplyParseError(Exception):
    """A model reply could not be parsed (missing marker, bad block, no number)."""


class GenerationError(Exception):
    """Prompt generation failed even after the single automatic re-ask."""


class ScoringError(Exception):
    """An image could not be scored (e.g. zero parseable questions)."""


class TreeParseError(Exception):
    """Bracketed constituency tree text is malformed."""


class ConfigError(Exception):
    """Run configuration is missing or inconsistent."""


class LedgerError(Exception):
    """Ledger file is corrupt, truncated, or from an unknown schema."""
