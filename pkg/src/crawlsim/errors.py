"""Exception hierarchy.

Everything a user can cause (bad files, bad configs, out-of-range ids) derives
from :class:`CrawlSimError`; the CLI maps those to exit code 2.
"""


class CrawlSimError(Exception):
    pass


class ParseError(CrawlSimError):
    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}".strip() if where else message)


class NodeRangeError(CrawlSimError, IndexError):
    pass


class IngestionError(CrawlSimError):
    pass


class ContentMissingError(CrawlSimError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ScoreLookupError(CrawlSimError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class TrainingError(CrawlSimError):
    pass


class ConfigError(CrawlSimError, ValueError):
    pass


class UndefinedMetricError(CrawlSimError, ValueError):
    pass


class UndefinedCorrelationError(UndefinedMetricError):
    pass
