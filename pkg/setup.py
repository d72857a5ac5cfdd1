"""
Setup script for the discovery harness package.
"""

from setuptools import setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh if line.strip() and not line.startswith("#")]

setup(
    name="discovery-harness",
    version="1.0.0",
    author="Discovery Harness Team",
    author_email="",
    description="Seedable benchmark harness for autonomous causal discovery and trajectory tracking",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=["discovery_harness"],
    package_dir={"discovery_harness": "."},
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.11",
    install_requires=requirements,
    entry_points={
        "console_scripts": [
            "discovery-harness=discovery_harness.main:main",
        ],
    },
    include_package_data=True,
    package_data={
        "discovery_harness": ["*.md", "*.txt", "data/*"],
    },
)
