"""
查询服务异常

与 privacy_noise 的异常共用 ToolkitError 基类，
handle_request 把它们统一转换成 {"code", "message"} 错误响应。
"""

from privacy_noise.exceptions import ToolkitError


class ParseError(ToolkitError):
    code = 'parse_error'


class InvalidRequest(ToolkitError):
    code = 'invalid_request'


class UnknownMechanism(ToolkitError):
    code = 'unknown_mechanism'


class IncompatibleQuery(ToolkitError):
    code = 'incompatible_query'


class BindError(ToolkitError):
    code = 'bind_error'
