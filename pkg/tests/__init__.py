"""
Initialize tests package.
"""
