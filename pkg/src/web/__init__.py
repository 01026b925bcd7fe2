"""Metrics HTTP endpoint"""
