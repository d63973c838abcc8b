"""
Test suite for hierarchical few-shot classification
"""
