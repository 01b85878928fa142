from setuptools import find_packages, setup

with open("requirements.txt") as fh:
    requirements = [line.strip() for line in fh if line.strip() and not line.startswith("pytest")]

setup(
    name="mvcons",
    version="0.1.0",
    description="Source-free domain adaptation by multiview latent consistency",
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.9",
    install_requires=requirements,
    entry_points={"console_scripts": ["mvcons=mvcons.cli:main"]},
)
