#!/usr/bin/env python
# -*- coding: utf-8 -*-

from setuptools import setup

with open('README.md') as readme_file:
    readme = readme_file.read()

with open('HISTORY.md') as history_file:
    history = history_file.read()

with open("requirements.txt") as f:
    requirements = [req.strip() for req in f.readlines()]

with open("requirements_dev.txt") as f:
    test_requirements = [req.strip() for req in f.readlines()]

setup(
    name='hjm_finn',
    version='0.1.0',
    description="Valuación de caplets HJM con una red entrenada sobre la EDP de Feynman-Kac.",
    long_description=readme + '\n\n' + history,
    long_description_content_type='text/markdown',
    author="HJM FINN",
    author_email='hjm-finn@example.org',
    packages=[
        'hjm_finn',
    ],
    package_dir={'hjm_finn':
                 'hjm_finn'},
    include_package_data=True,
    install_requires=requirements,
    python_requires='>=3.8',
    entry_points='''
        [console_scripts]
        hjm_finn=hjm_finn.hjm_finn:cli
    ''',
    license="MIT license",
    zip_safe=False,
    keywords='hjm_finn',
    classifiers=[
        'Development Status :: 2 - Pre-Alpha',
        'Intended Audience :: Financial and Insurance Industry',
        'License :: OSI Approved :: MIT License',
        'Natural Language :: Spanish',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],
    test_suite='tests',
    tests_require=test_requirements
)
