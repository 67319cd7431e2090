"""
命令行与报告输出
"""
