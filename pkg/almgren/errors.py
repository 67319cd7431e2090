"""
异常定义
CLI根据异常类型映射退出码：输入错误 2，Lipschitz预算错误 3，资源上限 4
"""


class GeometryInputError(ValueError):
    """输入数据不合法（维数、Q值、空间、参数范围等）"""


class DimensionMismatchError(GeometryInputError):
    """点的维数与空间不一致"""


class QMismatchError(GeometryInputError):
    """两个QPoint的Q值不一致"""


class SpaceMismatchError(GeometryInputError):
    """两个对象不在同一空间"""


class ParameterRangeError(GeometryInputError):
    """参数超出允许范围"""


class EmptyInputError(GeometryInputError):
    """输入列表为空"""


class ExhaustiveCapError(GeometryInputError):
    """Q超过穷举上限"""

    def __init__(self, q: int, cap: int):
        super().__init__(
            f"Q={q} 超过穷举上限 {cap}，请改用 s_metric_bottleneck"
        )
        self.q = q
        self.cap = cap


class ContinuationAmbiguityError(GeometryInputError):
    """分支延续步长过大，无法区分分支"""


class UnknownFixtureError(GeometryInputError):
    """未知的样例函数名称"""


class LipschitzBudgetError(Exception):
    """f 在某点超出假定的 Lipschitz 预算 D"""

    def __init__(self, message: str, inflation_hint: float = 1.05):
        super().__init__(
            f"{message}；请将 Lip(f) 乘以安全系数后重试 (例如 --lip-inflation {inflation_hint})"
        )
        self.inflation_hint = inflation_hint


class ResourceCapError(Exception):
    """枚举规模超过配置上限"""
