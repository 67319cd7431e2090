"""
Almgren多值函数计算库
包含Q点多重集的瓶颈度量、球面到球体的Lipschitz延拓构造以及Nagata维数覆盖验证
"""

__version__ = "0.3.0"
ARTIFACT_NAME = "almgren-mvf"
