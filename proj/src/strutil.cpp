#include "taskdb/strutil.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "taskdb/error.hpp"

namespace taskdb {

namespace {

bool needs_escape(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return u <= 0x20 || u >= 0x7f || c == '%' || c == '=' || c == ',';
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string encode_field(std::string_view raw) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (needs_escape(c)) {
      unsigned char u = static_cast<unsigned char>(c);
      out.push_back('%');
      out.push_back(digits[u >> 4]);
      out.push_back(digits[u & 0xf]);
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string decode_field(std::string_view encoded) {
  std::string out;
  out.reserve(encoded.size());
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    if (encoded[i] == '%' && i + 2 < encoded.size()) {
      int hi = hex_value(encoded[i + 1]);
      int lo = hex_value(encoded[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(char(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    out.push_back(encoded[i]);
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      return parts;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

std::map<std::string, std::string> parse_kv_line(std::string_view line) {
  std::map<std::string, std::string> out;
  for (const std::string& token : split(line, ' ')) {
    if (token.empty()) continue;
    std::size_t eq = token.find('=');
    if (eq == std::string::npos) continue;
    out[token.substr(0, eq)] = decode_field(token.substr(eq + 1));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size))
    raise(ErrorCode::IoError, "short read on " + path.string());
  return bytes;
}

namespace {

void commit_file(const std::filesystem::path& path, const std::string& tmp_name) {
  std::error_code ec;
  std::filesystem::rename(tmp_name, path, ec);
  if (ec) raise(ErrorCode::IoError, "cannot commit " + path.string() + ": " + ec.message());
}

}  // namespace

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::string tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IoError, "cannot write " + tmp);
    out.write(text.data(), std::streamsize(text.size()));
    if (!out) raise(ErrorCode::IoError, "short write on " + tmp);
  }
  commit_file(path, tmp);
}

void write_binary_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  std::string tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IoError, "cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) raise(ErrorCode::IoError, "short write on " + tmp);
  }
  commit_file(path, tmp);
}

void append_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) raise(ErrorCode::IoError, "cannot append to " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) raise(ErrorCode::IoError, "short append on " + path.string());
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace taskdb
