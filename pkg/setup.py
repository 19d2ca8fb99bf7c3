from setuptools import setup, find_packages

setup(
    name="column-pcg",
    version="0.1.0",
    description="Matrix-free preconditioned conjugate gradient solver for strongly anisotropic elliptic problems",
    packages=find_packages(include=["src", "src.*"]),
    py_modules=["main"],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.11.0",
        "numba>=0.58.0",
        "pyyaml>=6.0",
        "rich>=13.0.0",
    ],
    extras_require={"test": ["pytest>=7.4.0"]},
    entry_points={"console_scripts": ["column-pcg=main:main"]},
)
