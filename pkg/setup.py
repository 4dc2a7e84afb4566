from setuptools import setup, find_packages

setup(
    name='pilotwave_study',
    version='1.0',
    packages=find_packages(exclude=['tests']),
    install_requires=['numpy', 'scipy>=1.12', 'pandas', 'pyyaml', 'tqdm', 'wandb'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['pilotwave=pilotwave_study.cli:main']},
)
