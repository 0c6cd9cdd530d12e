"""Exception hierarchy for the evaluation harness."""


class ApevalError(Exception):
    """Base class for every error raised by apeval."""


# corpus
class CorpusError(ApevalError):
    pass


class MalformedRecord(CorpusError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(CorpusError):
    pass


class EmptyCorpus(CorpusError):
    pass


class InsufficientDocuments(CorpusError):
    def __init__(self, author_id: str, needed: int, available: int):
        super().__init__(
            f"author {author_id!r} needs {needed} documents, only {available} available"
        )
        self.author_id = author_id
        self.needed = needed
        self.available = available


class NoAcceptedDocuments(CorpusError):
    pass


# prompting / providers
class MissingSamples(ApevalError):
    pass


class UnparseableVerdict(ApevalError):
    def __init__(self, raw_response: str):
        super().__init__(f"cannot parse verdict from {raw_response[:80]!r}")
        self.raw_response = raw_response


class ProviderError(ApevalError):
    pass


class ProviderUnavailable(ProviderError):
    pass


class AuthMissing(ProviderError):
    pass


class EmptyCompletion(ProviderError):
    pass


class OfflineCacheMiss(ProviderError):
    """Raised in offline mode when a network request would be required."""


class DetectorUnavailable(ApevalError):
    pass


# metrics
class EmptyText(ApevalError):
    pass


class CorpusTooSmall(ApevalError):
    pass


# topic model
class TooFewDocuments(ApevalError):
    pass


class EmptyVocabulary(ApevalError):
    pass


class TopicOutOfRange(ApevalError):
    pass


# experiment stages
class IncompleteScores(ApevalError):
    pass


class MixedCycleCounts(ApevalError):
    pass


class ConfigError(ApevalError):
    pass


class MissingJudges(ApevalError):
    pass


class MissingRounds(ApevalError):
    pass


class MissingStageOutput(ApevalError):
    pass
