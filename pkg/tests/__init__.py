"""
Test suite for multiregeneration
"""
