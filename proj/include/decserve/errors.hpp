// Copyright 2026 The decserve Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DECSERVE_ERRORS_HPP_
#define DECSERVE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace decserve {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input. The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// The request is well-formed but cannot be satisfied by the cluster. The CLI
// maps these to exit code 3.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class DuplicateGpuId : public InputError {
 public:
  explicit DuplicateGpuId(const std::string& id)
      : InputError("duplicate gpu id: " + id), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class UnknownGpu : public Error {
 public:
  explicit UnknownGpu(const std::string& id)
      : Error("unknown gpu: " + id), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class NoFeasiblePipeline : public InfeasibleError {
 public:
  NoFeasiblePipeline()
      : InfeasibleError("no region can host a full copy of the model") {}
  explicit NoFeasiblePipeline(const std::string& what)
      : InfeasibleError(what) {}
};

class InfeasibleCapacity : public InfeasibleError {
 public:
  InfeasibleCapacity(long long capacity, int layers)
      : InfeasibleError("total layer capacity " + std::to_string(capacity) +
                        " is below the layer count " +
                        std::to_string(layers)) {}
};

class RoundingOverflow : public Error {
 public:
  RoundingOverflow()
      : Error("no below-capacity entry left for remainder distribution") {}
};

class DegenerateObjective : public InputError {
 public:
  DegenerateObjective()
      : InputError("objective denominator is zero (t_comp = 0 and rtt = 0)") {}
};

class UncoveredLayer : public Error {
 public:
  explicit UncoveredLayer(int layer)
      : Error("layer " + std::to_string(layer) + " has no live replica"),
        layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

class NoPath : public Error {
 public:
  NoPath() : Error("no legal chain reaches the last layer") {}
};

class ZeroCapacity : public Error {
 public:
  explicit ZeroCapacity(const std::string& id)
      : Error("gpu " + id + " cannot hold a single layer"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class EmptySample : public Error {
 public:
  EmptySample() : Error("percentile of an empty sample") {}
};

}  // namespace decserve

#endif  // DECSERVE_ERRORS_HPP_
