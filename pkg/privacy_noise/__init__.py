"""
privacy_noise: 受约束加性噪声隐私机制的数值核心。

模块：
- matcore: 对称/半正定矩阵工具（谱分解、平方根、伪逆）
- densities: 噪声分布（cos²、倾斜cos²、高斯、拉普拉斯）
- fisher: Fisher信息与Cramér–Rao界
- mechanisms: 查询、最优噪声选择与加噪响应
- dynamic: 线性时不变系统的状态隐私
- pde_verify: 最优性方程的有限差分残差校验
- adversary: 攻击者估计器与蒙特卡洛CRB校验
- privacy_analysis: 与差分隐私的对比
"""
