"""MAP reconstruction at fixed regularisation parameters"""
