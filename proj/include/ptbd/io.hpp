#pragma once

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ptbd/tensor.hpp"

namespace ptbd {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using AnyTensor = std::variant<DenseTensor<double>, DenseTensor<std::complex<double>>>;

namespace detail {

inline void put_le_double(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline double get_le_double(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

struct DtenHeader {
  Field field = Field::real;
  std::vector<Index> dims;
};

inline DtenHeader parse_dten_header(const std::string& line) {
  std::istringstream in(line);
  std::string magic, field;
  std::size_t m = 0;
  if (!(in >> magic) || magic != "DTEN1") throw FormatError("DTEN1: bad magic in header '" + line + "'");
  if (!(in >> field) || (field != "r" && field != "c")) throw FormatError("DTEN1: field must be 'r' or 'c'");
  if (!(in >> m) || m < 2) throw FormatError("DTEN1: order must be an integer >= 2");
  DtenHeader h;
  h.field = field == "r" ? Field::real : Field::complex;
  for (std::size_t i = 0; i < m; ++i) {
    long long n = 0;
    if (!(in >> n) || n < 1) throw FormatError("DTEN1: dimension " + std::to_string(i) + " missing or not positive");
    h.dims.push_back(static_cast<Index>(n));
  }
  std::string extra;
  if (in >> extra) throw FormatError("DTEN1: trailing tokens in header");
  return h;
}

}  // namespace detail

template <typename Scalar>
void write_dten(std::ostream& out, const DenseTensor<Scalar>& t) {
  out << "DTEN1 " << (is_complex_v<Scalar> ? 'c' : 'r') << ' ' << t.order();
  for (Index n : t.dims()) out << ' ' << n;
  out << '\n';
  for (Index i = 0; i < t.size(); ++i) {
    if constexpr (is_complex_v<Scalar>) {
      detail::put_le_double(out, t[i].real());
      detail::put_le_double(out, t[i].imag());
    } else {
      detail::put_le_double(out, t[i]);
    }
  }
  if (!out) throw std::runtime_error("DTEN1: write failed");
}

template <typename Scalar>
void write_dten(const std::string& path, const DenseTensor<Scalar>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dten(out, t);
}

inline AnyTensor read_dten(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("DTEN1: missing header");
  const detail::DtenHeader h = detail::parse_dten_header(line);
  const Index count = product(h.dims);
  const std::size_t per = h.field == Field::real ? 1 : 2;
  const std::size_t bytes = static_cast<std::size_t>(count) * per * 8;

  std::vector<unsigned char> payload(bytes);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw FormatError("DTEN1: payload has " + std::to_string(in.gcount()) + " bytes, header requires " +
                      std::to_string(bytes));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("DTEN1: payload longer than header requires");

  if (h.field == Field::real) {
    DenseTensor<double> t(h.dims);
    for (Index i = 0; i < count; ++i) t[i] = detail::get_le_double(payload.data() + 8 * i);
    return t;
  }
  DenseTensor<std::complex<double>> t(h.dims);
  for (Index i = 0; i < count; ++i) {
    t[i] = {detail::get_le_double(payload.data() + 16 * i), detail::get_le_double(payload.data() + 16 * i + 8)};
  }
  return t;
}

inline AnyTensor read_dten(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_dten(in);
}

/// Reads a tensor and insists on a specific field.
template <typename Scalar>
DenseTensor<Scalar> read_dten_as(const std::string& path) {
  AnyTensor any = read_dten(path);
  if (auto* t = std::get_if<DenseTensor<Scalar>>(&any)) return std::move(*t);
  throw FormatError("DTEN1: '" + path + "' holds a " + std::string(is_complex_v<Scalar> ? "real" : "complex") +
                    " tensor, expected " + (is_complex_v<Scalar> ? "complex" : "real"));
}

inline Field tensor_field(const AnyTensor& t) {
  return std::holds_alternative<DenseTensor<double>>(t) ? Field::real : Field::complex;
}

}  // namespace ptbd
