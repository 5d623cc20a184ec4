import re

from setuptools import find_packages, setup

with open("README.rst", "r") as fp:
    LONG_DESCRIPTION = fp.read()

with open("src/ptpdelay/__init__.py", "r") as fp:
    VERSION = re.search(r'^__version__ = "([^"]+)"', fp.read(), re.M).group(1)

setup(
    name="ptpdelay",
    version=VERSION,
    description="Simulation and analysis of delay attacks on encrypted PTP",
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/x-rst",
    packages=find_packages("src"),
    package_dir={"": "src"},
    include_package_data=True,
    package_data={"ptpdelay": ["scenarios/*.scenario"]},
    install_requires=[
        "numpy",
        "pandas>=1.5",
        "tqdm",
        "scipy",
    ],
    python_requires=">=3.8",
    extras_require={
        "tests": [
            # Pytest
            "pytest",
            "pytest-cov",
            "timer-cm",
            # Coverage
            "codecov",
        ],
        "docs": [
            "sphinx ~= 2.2",
            "sphinx_rtd_theme",
            "sphinxcontrib-programoutput",
            "sphinx-autodoc-typehints>=1.10.0",
            "Jinja2<3.1",
        ],
    },
    entry_points={"console_scripts": ["ptpdelay=ptpdelay.cli:main"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: System :: Networking :: Time Synchronization",
    ],
)
