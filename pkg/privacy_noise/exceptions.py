"""
工具包异常

所有异常都继承自 ToolkitError，携带机器可读的 code 和上下文字典，
便于查询服务和实验命令把错误转换成结构化输出。
"""


class ToolkitError(Exception):
    """工具包异常基类"""

    code = 'toolkit_error'

    def __init__(self, message='', **context):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.context = context

    def to_dict(self):
        """转换为 {"code", "message", "context"} 字典"""
        return {
            'code': self.code,
            'message': self.message,
            'context': {k: _plain(v) for k, v in self.context.items()},
        }


def _plain(value):
    # numpy标量/数组转换为JSON可序列化的值
    if hasattr(value, 'tolist'):
        return value.tolist()
    return value


class InvalidMatrix(ToolkitError):
    code = 'invalid_matrix'


class DimensionMismatch(ToolkitError):
    code = 'dimension_mismatch'


class NonSymmetric(ToolkitError):
    code = 'non_symmetric'


class NotPsd(ToolkitError):
    code = 'not_psd'


class Singular(ToolkitError):
    code = 'singular'


class SingularFisher(Singular):
    code = 'singular_fisher'


class SingularGramian(Singular):
    code = 'singular_gramian'


class RankDeficient(ToolkitError):
    code = 'rank_deficient'


class ZeroQuery(RankDeficient):
    code = 'zero_query'


class NotScalar(ToolkitError):
    code = 'not_scalar'


class QuadratureFailure(ToolkitError):
    code = 'quadrature_failure'


class SingularDensity(ToolkitError):
    code = 'singular_density'


class ZeroTrace(ToolkitError):
    code = 'zero_trace'


class DomainViolation(ToolkitError):
    code = 'domain_violation'


class SupportViolation(ToolkitError):
    code = 'support_violation'


class HorizonTooShort(ToolkitError):
    code = 'horizon_too_short'


class DeltaOutOfRange(ToolkitError):
    code = 'delta_out_of_range'


class InvalidParameter(ToolkitError):
    code = 'invalid_parameter'


class ConfigError(ToolkitError):
    code = 'config_error'
